"""Measure-preserving example systems and their observables.

Two families are implemented exactly:

* subshifts of finite type carrying a stationary Markov measure (the
  Gibbs measure of a locally constant potential), sampled on finite
  symbol windows ``[-W, W]``;
* hyperbolic toral automorphisms acting on the fixed-point lattice
  ``2^-q Z^d / Z^d``, where an integer unimodular matrix acts exactly by
  modular square-and-multiply.

Observables are locally constant (cylinder) functions on shifts and real
trigonometric polynomials on the torus; both support exact means.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import intmat
from .errors import (
    DomainError,
    IncompatibleSupport,
    NotAperiodic,
    NotStochastic,
    VariantMismatch,
    WindowExhausted,
)

ROW_SUM_TOLERANCE = 1e-9
STATIONARY_RESIDUAL = 1e-12
UNIT_MODULUS_TOLERANCE = 1e-9


# ---------------------------------------------------------------------------
# Shift systems
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ShiftSystem:
    """Aperiodic subshift of finite type with its stationary Markov measure."""

    alphabet_size: int
    adjacency: np.ndarray      # (m, m) 0/1
    transition: np.ndarray     # (m, m) row-stochastic, support = adjacency
    stationary: np.ndarray     # (m,) positive left fixed vector

    @property
    def reversed_transition(self) -> np.ndarray:
        """Time-reversed chain R[i, j] = pi[j] P[j, i] / pi[i]."""
        pi = self.stationary
        return self.transition.T * pi[None, :] / pi[:, None]

    def word_probability(self, word: Sequence[int]) -> float:
        """Stationary probability of a finite admissible word; 0 otherwise."""
        w = list(word)
        p = float(self.stationary[w[0]])
        for a, b in zip(w, w[1:]):
            p *= float(self.transition[a, b])
        return p


def _is_aperiodic(adjacency: np.ndarray) -> bool:
    m = adjacency.shape[0]
    bound = (m - 1) ** 2 + 1
    reach = adjacency > 0
    power = reach.copy()
    for _ in range(bound):
        if power.all():
            return True
        power = (power.astype(np.int64) @ reach.astype(np.int64)) > 0
    return False


def build_shift(adjacency, transition) -> ShiftSystem:
    """Validate matrices, compute the stationary vector, freeze the system.

    Transition rows are accepted when they sum to 1 within 1e-9 and are
    renormalized afterwards, so the stored rows sum to 1 to machine
    precision.
    """
    adjacency = np.asarray(adjacency, dtype=np.int64)
    transition = np.asarray(transition, dtype=np.float64).copy()
    if adjacency.ndim != 2 or adjacency.shape[0] != adjacency.shape[1]:
        raise DomainError("adjacency must be a square matrix")
    if transition.shape != adjacency.shape:
        raise DomainError("transition shape must match adjacency")
    m = adjacency.shape[0]
    if m < 2:
        raise DomainError("alphabet size must be at least 2")
    if not np.isin(adjacency, (0, 1)).all():
        raise DomainError("adjacency entries must be 0 or 1")
    if (transition < 0).any():
        raise DomainError("transition entries must be nonnegative")

    support = transition > 0
    if not (support == (adjacency == 1)).all():
        bad = np.argwhere(support != (adjacency == 1))[0]
        raise IncompatibleSupport(
            f"transition support mismatches adjacency at entry ({bad[0]}, {bad[1]})"
        )

    row_sums = transition.sum(axis=1)
    worst = int(np.argmax(np.abs(row_sums - 1.0)))
    if abs(row_sums[worst] - 1.0) > ROW_SUM_TOLERANCE:
        raise NotStochastic(
            f"row {worst} sums to {row_sums[worst]!r}, deviation exceeds 1e-9"
        )
    transition /= row_sums[:, None]

    if not _is_aperiodic(adjacency):
        raise NotAperiodic(
            f"no power of the adjacency matrix up to {(m - 1) ** 2 + 1} is positive"
        )

    # Left fixed vector: replace one balance equation by the normalization.
    a = transition.T - np.eye(m)
    a[-1, :] = 1.0
    b = np.zeros(m)
    b[-1] = 1.0
    stationary = np.linalg.solve(a, b)
    residual = np.max(np.abs(stationary @ transition - stationary))
    if residual > STATIONARY_RESIDUAL:
        # One step of iterative refinement; aperiodic chains contract fast.
        stationary = stationary @ np.linalg.matrix_power(transition, 64)
        stationary /= stationary.sum()
        residual = np.max(np.abs(stationary @ transition - stationary))
        if residual > STATIONARY_RESIDUAL:
            raise NotStochastic(f"stationary residual {residual:g} exceeds 1e-12")
    if (stationary <= 0).any():
        raise NotStochastic("stationary vector has a nonpositive entry")

    adjacency.setflags(write=False)
    transition.setflags(write=False)
    stationary.setflags(write=False)
    return ShiftSystem(m, adjacency, transition, stationary)


def bernoulli_system(probabilities: Sequence[float]) -> ShiftSystem:
    """Full shift with an i.i.d. product measure (all-ones adjacency)."""
    p = np.asarray(probabilities, dtype=np.float64)
    m = p.size
    return build_shift(np.ones((m, m), dtype=np.int64), np.tile(p, (m, 1)))


@dataclass(frozen=True, eq=False)
class ShiftPoint:
    """Finite window of a bi-infinite admissible sequence.

    ``symbols[radius + offset + i]`` is the symbol the current point sees
    at index ``i``; shifting only moves ``offset``.  Reaching outside the
    stored window is a hard error, never a silent extension.
    """

    symbols: np.ndarray
    radius: int
    offset: int = 0

    def symbol(self, index: int) -> int:
        pos = self.offset + index
        if abs(pos) > self.radius:
            raise WindowExhausted(
                f"index {index} at offset {self.offset} leaves window [-{self.radius}, {self.radius}]"
            )
        return int(self.symbols[pos + self.radius])

    def word(self, radius: int) -> tuple[int, ...]:
        lo = self.offset - radius
        hi = self.offset + radius
        if lo < -self.radius or hi > self.radius:
            raise WindowExhausted(
                f"word of radius {radius} at offset {self.offset} leaves window"
            )
        return tuple(int(s) for s in self.symbols[lo + self.radius: hi + self.radius + 1])

    def shift(self, n: int) -> "ShiftPoint":
        return dataclasses.replace(self, offset=self.offset + int(n))


def shift_apply(point: ShiftPoint, n: int) -> ShiftPoint:
    """Advance the origin by n; symbols are shared, never copied."""
    return point.shift(n)


def _sample_step(transition_cum: np.ndarray, current: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Vectorized one-step Markov draw given uniforms u in [0, 1)."""
    rows = transition_cum[current]
    # Thresholds exclude the leading 0 and trailing 1 of each cumulative row.
    return (u[:, None] >= rows[:, 1:-1]).sum(axis=1).astype(current.dtype)


def sample_windows(
    system: ShiftSystem, radius: int, count: int, rng: np.random.Generator
) -> np.ndarray:
    """Sample ``count`` stationary windows of shape (count, 2*radius + 1).

    Index 0 is drawn from the stationary vector, forward symbols from the
    transition matrix, backward symbols from the time-reversed chain; by
    stationarity the two-sided law is consistent.  Draw order is fixed:
    origin, all forward columns, all backward columns.
    """
    if radius < 0:
        raise DomainError("window radius must be >= 0")
    m = system.alphabet_size
    width = 2 * radius + 1
    dtype = np.int8 if m <= 127 else np.int64
    if count == 1:
        return _sample_window_scalar(system, radius, rng, dtype)
    out = np.empty((count, width), dtype=dtype)
    pi_cum = np.concatenate([[0.0], np.cumsum(system.stationary)])
    fwd_cum = np.concatenate(
        [np.zeros((m, 1)), np.cumsum(system.transition, axis=1)], axis=1
    )
    bwd_cum = np.concatenate(
        [np.zeros((m, 1)), np.cumsum(system.reversed_transition, axis=1)], axis=1
    )
    u0 = rng.random(count)
    out[:, radius] = (u0[:, None] >= pi_cum[None, 1:-1]).sum(axis=1)
    current = out[:, radius].copy()
    for i in range(1, radius + 1):
        current = _sample_step(fwd_cum, current, rng.random(count))
        out[:, radius + i] = current
    current = out[:, radius].copy()
    for i in range(1, radius + 1):
        current = _sample_step(bwd_cum, current, rng.random(count))
        out[:, radius - i] = current
    return out


def _sample_window_scalar(
    system: ShiftSystem, radius: int, rng: np.random.Generator, dtype
) -> np.ndarray:
    """Single-window sampler consuming the uniform stream in the exact
    order of the vectorized path, so both produce identical windows."""
    import bisect

    width = 2 * radius + 1
    u = rng.random(width)
    pi_thresholds = list(np.cumsum(system.stationary)[:-1])
    fwd = [list(np.cumsum(row)[:-1]) for row in system.transition]
    bwd = [list(np.cumsum(row)[:-1]) for row in system.reversed_transition]
    out = np.empty((1, width), dtype=dtype)
    origin = bisect.bisect_right(pi_thresholds, u[0])
    out[0, radius] = origin
    current = origin
    for i in range(1, radius + 1):
        current = bisect.bisect_right(fwd[current], u[i])
        out[0, radius + i] = current
    current = origin
    for i in range(1, radius + 1):
        current = bisect.bisect_right(bwd[current], u[radius + i])
        out[0, radius - i] = current
    return out


def sample_shift_point(system: ShiftSystem, radius: int, seed) -> ShiftPoint:
    """Draw one window from the stationary Markov measure, deterministically."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    symbols = sample_windows(system, radius, 1, rng)[0]
    symbols.setflags(write=False)
    return ShiftPoint(symbols=symbols, radius=radius)


# ---------------------------------------------------------------------------
# Toral automorphisms
# ---------------------------------------------------------------------------

DEFAULT_PRECISION_BITS = 128


@dataclass(frozen=True, eq=False)
class TorusAutomorphism:
    """Integer unimodular matrix acting on the 2^-q fixed-point torus model."""

    matrix: intmat.IntMatrix
    precision_bits: int = DEFAULT_PRECISION_BITS

    def __post_init__(self):
        object.__setattr__(self, "matrix", intmat.as_int_matrix(self.matrix))
        if self.dimension < 2:
            raise DomainError("torus dimension must be >= 2")
        if self.precision_bits < 1:
            raise DomainError("precision_bits must be >= 1")
        det = intmat.mat_det(self.matrix)
        if det not in (1, -1):
            raise DomainError(f"matrix determinant is {det}, must be +-1")
        moduli = np.abs(np.linalg.eigvals(np.array(self.matrix, dtype=np.float64)))
        if np.any(np.abs(moduli - 1.0) < UNIT_MODULUS_TOLERANCE):
            raise DomainError(
                "matrix has an eigenvalue of modulus within 1e-9 of 1 (not hyperbolic)"
            )

    @property
    def dimension(self) -> int:
        return len(self.matrix)

    @property
    def modulus(self) -> int:
        return 1 << self.precision_bits

    def inverse_matrix(self) -> intmat.IntMatrix:
        return intmat.mat_inverse_unimodular(self.matrix)


def build_torus(matrix, precision_bits: int = DEFAULT_PRECISION_BITS) -> TorusAutomorphism:
    return TorusAutomorphism(matrix=matrix, precision_bits=precision_bits)


@dataclass(frozen=True)
class TorusPoint:
    """Lattice point: coordinate i is coords[i] / 2^precision_bits mod 1."""

    coords: tuple[int, ...]
    precision_bits: int = DEFAULT_PRECISION_BITS

    def __post_init__(self):
        object.__setattr__(self, "coords", tuple(int(c) for c in self.coords))
        mod = 1 << self.precision_bits
        if any(not (0 <= c < mod) for c in self.coords):
            raise DomainError("coordinates must lie in [0, 2^q)")

    def as_floats(self) -> tuple[float, ...]:
        mod = 1 << self.precision_bits
        return tuple(c / mod for c in self.coords)


def torus_point_from_fractions(auto: TorusAutomorphism, values: Sequence) -> TorusPoint:
    """Build a point from exact rationals (Fraction, int or 'p/q' strings)."""
    from fractions import Fraction

    mod = auto.modulus
    coords = [int(Fraction(v) * mod) % mod for v in values]
    return TorusPoint(tuple(coords), auto.precision_bits)


def sample_torus_point(auto: TorusAutomorphism, seed) -> TorusPoint:
    """Uniform draw from the 2^-q coordinate lattice (exact Haar on the model)."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    q = auto.precision_bits
    words = (q + 63) // 64
    coords = []
    for _ in range(auto.dimension):
        value = 0
        for w in range(words):
            value |= int(rng.integers(0, 1 << 64, dtype=np.uint64)) << (64 * w)
        coords.append(value % auto.modulus)
    return TorusPoint(tuple(coords), q)


def torus_matrix_power(auto: TorusAutomorphism, n: int) -> intmat.IntMatrix:
    """matrix^n reduced mod 2^q; negative n uses the exact integer inverse."""
    mod = auto.modulus
    if n >= 0:
        return intmat.mat_pow(auto.matrix, n, mod)
    return intmat.mat_pow(auto.inverse_matrix(), -n, mod)


def torus_apply_power(auto: TorusAutomorphism, point: TorusPoint, n: int) -> TorusPoint:
    """coords <- matrix^n coords mod 2^q, exactly."""
    if point.precision_bits != auto.precision_bits:
        raise VariantMismatch("point and automorphism precision differ")
    power = torus_matrix_power(auto, n)
    return TorusPoint(intmat.mat_vec(power, point.coords, auto.modulus), auto.precision_bits)


# ---------------------------------------------------------------------------
# Observables
# ---------------------------------------------------------------------------

CYLINDER = "cylinder"
TRIG = "trig"


@dataclass(frozen=True, eq=False)
class Observable:
    """Locally constant function on a shift, or trig polynomial on the torus.

    Cylinder variant: value at a point is ``table[word]`` for the word of
    symbols at indices ``-radius..radius`` around the current origin, with
    ``default`` for admissible words absent from the table.  Trig variant:
    sum of ``a cos(2 pi <k, x>) + b sin(2 pi <k, x>)`` over ``terms``
    entries ``(k, a, b)`` with pairwise distinct integer frequencies.
    """

    variant: str
    radius: int = 0
    table: Mapping[tuple[int, ...], float] | None = None
    default: float = 0.0
    terms: tuple[tuple[tuple[int, ...], float, float], ...] | None = None

    def __post_init__(self):
        if self.variant == CYLINDER:
            if self.radius < 0:
                raise DomainError("cylinder radius must be >= 0")
            width = 2 * self.radius + 1
            table = {}
            for word, value in (self.table or {}).items():
                word = tuple(int(s) for s in word)
                if len(word) != width:
                    raise DomainError(
                        f"table word {word} has length {len(word)}, expected {width}"
                    )
                value = float(value)
                if not np.isfinite(value):
                    raise DomainError("cylinder values must be finite")
                table[word] = value
            object.__setattr__(self, "table", table)
        elif self.variant == TRIG:
            terms = tuple(
                (tuple(int(k) for k in freq), float(a), float(b))
                for freq, a, b in (self.terms or ())
            )
            freqs = [t[0] for t in terms]
            if len(set(freqs)) != len(freqs):
                raise DomainError("trig frequency vectors must be pairwise distinct")
            dims = {len(f) for f in freqs}
            if len(dims) > 1:
                raise DomainError("trig frequency vectors must share one dimension")
            object.__setattr__(self, "terms", terms)
        else:
            raise DomainError(f"unknown observable variant {self.variant!r}")

    def sup_norm_bound(self) -> float:
        """Cheap upper bound for the sup norm."""
        if self.variant == CYLINDER:
            values = list(self.table.values()) + [self.default]
            return max(abs(v) for v in values)
        return sum(abs(a) + abs(b) for _, a, b in self.terms)


def cylinder_observable(radius: int, table: Mapping, default: float = 0.0) -> Observable:
    return Observable(variant=CYLINDER, radius=radius, table=table, default=default)


def cylinder_indicator(word: Sequence[int]) -> Observable:
    """Indicator of a word centered at the origin; word length must be odd."""
    word = tuple(int(s) for s in word)
    if len(word) % 2 != 1:
        raise DomainError("indicator words must have odd length")
    return cylinder_observable((len(word) - 1) // 2, {word: 1.0})


def centered_cylinder_indicator(system: ShiftSystem, word: Sequence[int]) -> Observable:
    """Indicator of a word minus its exact stationary probability."""
    word = tuple(int(s) for s in word)
    p = system.word_probability(word)
    return cylinder_observable((len(word) - 1) // 2, {word: 1.0 - p}, default=-p)


def trig_observable(terms: Sequence) -> Observable:
    return Observable(variant=TRIG, terms=tuple(terms))


def trig_cosine(freq: Sequence[int], amplitude: float = 1.0) -> Observable:
    return trig_observable([(tuple(freq), amplitude, 0.0)])


def evaluate(observable: Observable, point) -> float:
    """Evaluate an observable at a point of the matching variant."""
    if observable.variant == CYLINDER:
        if not isinstance(point, ShiftPoint):
            raise VariantMismatch("cylinder observables require a shift point")
        word = point.word(observable.radius)
        return observable.table.get(word, observable.default)
    if not isinstance(point, TorusPoint):
        raise VariantMismatch("trig observables require a torus point")
    mod = 1 << point.precision_bits
    total = 0.0
    for freq, a, b in observable.terms:
        if len(freq) != len(point.coords):
            raise VariantMismatch("frequency dimension does not match the point")
        dot = sum(k * c for k, c in zip(freq, point.coords)) % mod
        phase = 2.0 * np.pi * (dot / mod)
        total += a * np.cos(phase) + b * np.sin(phase)
    return float(total)


def exact_mean(observable: Observable, system) -> float:
    """Exact invariant-measure mean of an observable."""
    if observable.variant == CYLINDER:
        if not isinstance(system, ShiftSystem):
            raise VariantMismatch("cylinder observables require a shift system")
        total = observable.default
        for word, value in observable.table.items():
            total += system.word_probability(word) * (value - observable.default)
        return float(total)
    if not isinstance(system, TorusAutomorphism):
        raise VariantMismatch("trig observables require a torus automorphism")
    mean = 0.0
    for freq, a, _b in observable.terms:
        if all(k == 0 for k in freq):
            mean += a  # sin(0) = 0: only the cosine coefficient survives
    return float(mean)


def cylinder_values_at(point: ShiftPoint, observable: Observable, positions) -> np.ndarray:
    """Vectorized cylinder evaluation at many shifted origins of one point.

    positions are absolute indices relative to the point's current origin.
    """
    if observable.variant != CYLINDER:
        raise VariantMismatch("cylinder_values_at requires a cylinder observable")
    positions = np.asarray(positions, dtype=np.int64) + point.offset
    w = observable.radius
    if positions.size and (
        positions.min() - w < -point.radius or positions.max() + w > point.radius
    ):
        raise WindowExhausted(
            f"positions reach outside window [-{point.radius}, {point.radius}]"
        )
    base = positions + point.radius
    values = np.full(positions.shape, observable.default, dtype=np.float64)
    if not observable.table:
        return values
    width = 2 * w + 1
    m = int(point.symbols.max()) + 1 if point.symbols.size else 1
    m = max(m, max((max(word) for word in observable.table), default=0) + 1)
    codes = np.zeros(positions.shape, dtype=np.int64)
    for j in range(width):
        codes = codes * m + point.symbols[base - w + j]
    lookup = {}
    for word, value in observable.table.items():
        code = 0
        for s in word:
            code = code * m + s
        lookup[code] = value
    table_codes = np.array(sorted(lookup), dtype=np.int64)
    table_vals = np.array([lookup[c] for c in sorted(lookup)], dtype=np.float64)
    idx = np.searchsorted(table_codes, codes)
    idx_clip = np.minimum(idx, table_codes.size - 1)
    hit = table_codes[idx_clip] == codes
    values[hit] = table_vals[idx_clip[hit]]
    return values
