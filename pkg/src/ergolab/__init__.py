"""Desk-scale laboratory for multiple ergodic averages and correlation decay.

Subpackages cover example systems (shifts with Markov measures, hyperbolic
toral automorphisms), non-clustered sequence generation with counting-
condition checkers, correlation estimators with exact oracles and joint
cumulants, multiple ergodic averages with quantitative rate statistics,
the dyadic chaining machinery, matrix growth classification, and a batch
experiment runner (``ergolab`` CLI).
"""

__version__ = "0.1.0"
