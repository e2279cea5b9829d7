"""Dyadic decomposition machinery and the variance-bound framework.

``L_{s,r}`` is the class of blocks ``{m : i 2^r < m <= (i+1) 2^r}`` for
``0 <= i < 2^{s-r}``, and ``L_s`` their union over levels ``0 <= r < s``.
Every ``{1..n}`` with ``n < 2^s`` splits into at most ``s`` disjoint
blocks of ``L_s``, which chains a maximal partial sum to per-block
variances by Cauchy-Schwarz.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .correlations import RateFit
from .errors import DomainError, InsufficientData, ShapeMismatch


@dataclass(frozen=True, order=True)
class DyadicInterval:
    """Block {m : index 2^level < m <= (index + 1) 2^level}."""

    level: int
    index: int

    def __post_init__(self):
        if self.level < 0 or self.index < 0:
            raise DomainError("level and index must be nonnegative")

    @property
    def lo(self) -> int:
        """Smallest member."""
        return self.index * (1 << self.level) + 1

    @property
    def hi(self) -> int:
        """Largest member."""
        return (self.index + 1) * (1 << self.level)

    def __len__(self) -> int:
        return 1 << self.level

    def __contains__(self, m: int) -> bool:
        return self.lo <= m <= self.hi


def s_of(n: int) -> int:
    """Smallest s with n < 2^s."""
    if n < 1:
        raise DomainError("need n >= 1")
    return int(n).bit_length()


def dyadic_classes(s: int) -> list[DyadicInterval]:
    """All blocks of L_s: levels 0 <= r < s, indices 0 <= i < 2^(s-r)."""
    if s < 1:
        raise DomainError("need s >= 1")
    return [
        DyadicInterval(r, i)
        for r in range(s)
        for i in range(1 << (s - r))
    ]


def decompose(n: int, s: int) -> list[DyadicInterval]:
    """Disjoint blocks of L_s covering {1..n}, largest first, at most s of them.

    Greedy on the binary expansion of n: the leading block has length the
    highest power of two in n, and so on down.
    """
    if n < 1:
        raise DomainError("need n >= 1")
    if n >= (1 << s):
        raise DomainError(f"need n < 2^s, got n={n}, s={s}")
    blocks = []
    start = 0  # blocks cover (start, start + 2^r]
    remaining = n
    for r in range(s - 1, -1, -1):
        if remaining & (1 << r):
            blocks.append(DyadicInterval(r, start >> r))
            start += 1 << r
            remaining -= 1 << r
    return blocks


# ---------------------------------------------------------------------------
# Variance profiles and the exceptional-set bound
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class VarianceProfile:
    """Per-level and total block-variance sums over an ensemble.

    level_means[r] is the ensemble mean of the squared block sums at level
    r; per_point_totals holds the full L_s sum for each ensemble point.
    """

    s: int
    level_means: np.ndarray
    total_mean: float
    per_point_totals: np.ndarray


def _as_term_matrix(terms, s: int) -> np.ndarray:
    arr = np.asarray(terms, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != (1 << s):
        raise ShapeMismatch(
            f"term matrix must have 2^s = {1 << s} columns, got shape {arr.shape}"
        )
    return arr


def variance_profile(terms, s: int) -> VarianceProfile:
    """Sum of squared block sums over L_s, per point and per level."""
    if s < 1:
        raise DomainError("need s >= 1")
    arr = _as_term_matrix(terms, s)
    points = arr.shape[0]
    level_means = np.empty(s, dtype=np.float64)
    totals = np.zeros(points, dtype=np.float64)
    for r in range(s):
        block_sums = arr.reshape(points, 1 << (s - r), 1 << r).sum(axis=2)
        level_totals = (block_sums ** 2).sum(axis=1)
        totals += level_totals
        level_means[r] = level_totals.mean()
    return VarianceProfile(
        s=s,
        level_means=level_means,
        total_mean=float(totals.mean()),
        per_point_totals=totals,
    )


def exceptional_fraction(
    terms, s: int, epsilon: float, sigma: float
) -> tuple[float, float]:
    """Fraction of points whose L_s total exceeds s^(2+eps) 2^(sigma s),
    and its Chebyshev bound C s^-(1+eps) with C = mean total / (s 2^(sigma s)).

    The bound holds for the empirical ensemble by Markov's inequality, so
    fraction <= bound up to floating error by construction.
    """
    if epsilon <= 0 or sigma <= 0:
        raise DomainError("epsilon and sigma must be positive")
    profile = variance_profile(terms, s)
    threshold = s ** (2.0 + epsilon) * 2.0 ** (sigma * s)
    fraction = float(np.mean(profile.per_point_totals > threshold))
    constant = profile.total_mean / (s * 2.0 ** (sigma * s))
    bound = constant * s ** (-1.0 - epsilon)
    return fraction, bound


# ---------------------------------------------------------------------------
# Chain inequality and the scale comparisons
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChainCheck:
    lhs: float
    mid: float
    rhs: float
    passed: bool


def chain_inequality_check(terms: Sequence[float], n: int) -> ChainCheck:
    """(sum_{k<=n} F_k)^2 <= s sum_{L(n)} (block sums)^2 <= s sum_{L_s} (...)^2
    with s = s_of(n); terms beyond n are treated as zero."""
    if n < 1:
        raise DomainError("need n >= 1")
    arr = np.zeros(1 << s_of(n), dtype=np.float64)
    given = np.asarray(terms, dtype=np.float64)
    if given.size < n:
        raise ShapeMismatch(f"need at least n={n} terms, got {given.size}")
    arr[:n] = given[:n]
    s = s_of(n)
    lhs = float(arr[:n].sum()) ** 2
    mid = s * sum(
        float(arr[block.lo - 1: block.hi].sum()) ** 2 for block in decompose(n, s)
    )
    rhs = s * float(variance_profile(arr[None, :], s).per_point_totals[0])
    scale = max(abs(lhs), abs(mid), abs(rhs), 1.0)
    tol = 1e-9 * scale
    passed = lhs <= mid + tol and mid <= rhs + tol
    return ChainCheck(lhs=lhs, mid=mid, rhs=rhs, passed=passed)


def power_gap_check(m: int, n: int, epsilon: float) -> tuple[float, float, bool]:
    """(n - m)^(1+eps) <= n^(1+eps) - m^(1+eps) with constant 1, for 0 <= m < n."""
    if not (0 <= m < n):
        raise DomainError("need 0 <= m < n")
    if epsilon <= 0:
        raise DomainError("epsilon must be positive")
    e = 1.0 + epsilon
    lhs = float((n - m) ** e)
    rhs = float(n ** e - m ** e)
    return lhs, rhs, lhs <= rhs * (1.0 + 1e-12) + 1e-12


def ks_ratio_bound(sigma: float, epsilon: float, n_max: int) -> tuple[float, int]:
    """max over 2 <= n <= n_max of
    2^(s(n) sigma / 2) s(n)^(3/2+eps) / (n^(sigma/2) log^(3/2+eps) n),
    returned with its argmax.  Natural logarithm."""
    if sigma <= 0 or epsilon <= 0:
        raise DomainError("sigma and epsilon must be positive")
    if n_max < 4:
        raise DomainError("need n_max >= 4")
    n = np.arange(2, n_max + 1, dtype=np.int64)
    s = np.frexp(n.astype(np.float64))[1]  # exact bit length for n < 2^53
    expo = 1.5 + epsilon
    log_ratio = (
        0.5 * sigma * s * np.log(2.0)
        + expo * np.log(s)
        - 0.5 * sigma * np.log(n)
        - expo * np.log(np.log(n))
    )
    best = int(np.argmax(log_ratio))
    return float(np.exp(log_ratio[best])), int(n[best])


# ---------------------------------------------------------------------------
# Ensemble second moments and the growth-exponent fit
# ---------------------------------------------------------------------------

# Term generators are vectorized callbacks (point_indices, ks) -> 2D array;
# batches keep memory at one dyadic block of terms at a time.
TermGenerator = Callable[[np.ndarray, np.ndarray], np.ndarray]

BATCH_POINTS = 512


def empirical_E(
    generator: TermGenerator, n_points: int, m: int, n: int
) -> tuple[float, float]:
    """Ensemble estimate of E (sum_{m<k<=n} F_k)^2 with its standard error."""
    if not (0 <= m < n):
        raise DomainError("need 0 <= m < n")
    if n_points < 2:
        raise DomainError("need at least 2 ensemble points")
    ks = np.arange(m + 1, n + 1, dtype=np.int64)
    total = 0.0
    total_sq = 0.0
    for lo in range(0, n_points, BATCH_POINTS):
        idx = np.arange(lo, min(lo + BATCH_POINTS, n_points), dtype=np.int64)
        block = np.asarray(generator(idx, ks), dtype=np.float64)
        if block.shape != (idx.size, ks.size):
            raise ShapeMismatch(
                f"generator returned shape {block.shape}, expected {(idx.size, ks.size)}"
            )
        sums_sq = block.sum(axis=1) ** 2
        total += float(sums_sq.sum())
        total_sq += float((sums_sq ** 2).sum())
    mean = total / n_points
    var = max(total_sq / n_points - mean ** 2, 0.0)
    std_error = (var / n_points) ** 0.5
    return mean, std_error


def sigma_fit(ns: Sequence[int], e_values: Sequence[float]) -> RateFit:
    """Least-squares slope of log E(0, N) against log N over a dyadic grid.

    The returned fit records the growth exponent sigma-hat as ``exponent``
    under the polynomial model.
    """
    ns = [int(v) for v in ns]
    if len(ns) < 4:
        raise InsufficientData("need at least 4 grid points")
    for v in ns:
        if v < 2 or v & (v - 1):
            raise DomainError(f"grid point {v} is not a power of two >= 2")
    e = np.asarray(e_values, dtype=np.float64)
    if e.size != len(ns) or (e <= 0).any():
        raise DomainError("need one positive E value per grid point")
    x = np.log(np.asarray(ns, dtype=np.float64))
    y = np.log(e)
    design = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    return RateFit(
        model="polynomial",
        exponent=float(coef[0]),
        amplitude=float(np.exp(coef[1])),
        rss=float(resid @ resid),
        data_range=(float(min(ns)), float(max(ns))),
        n_points=len(ns),
    )
