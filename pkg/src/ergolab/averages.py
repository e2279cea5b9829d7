"""Multiple ergodic averages along sequences and their rate statistics.

The streamed average is A_N = (1/N) sum_{n<=N} prod_i f_i(h^{m_i r_n} x)
with pairwise distinct nonzero multipliers m_i and a non-clustered
sequence r_n; S_N = N (A_N - target) is the centered sum.  The rate
statistic |A_N - target| / rho_{eps,delta}(N) operationalizes the
quantitative pointwise error scale, and ensembles of independent points
turn the almost-sure statement into fraction and median trends.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError, PrecisionBudget, VariantMismatch
from .seeding import ROLE_POINT, ROLE_TERMS, rng_for
from .sequences import SequenceSpec, generate
from .systems import (
    CYLINDER,
    TRIG,
    Observable,
    ShiftPoint,
    ShiftSystem,
    TorusAutomorphism,
    TorusPoint,
    cylinder_values_at,
    evaluate,
    exact_mean,
    sample_shift_point,
    sample_torus_point,
    torus_matrix_power,
)
from . import intmat

# Cached modular matrix powers are tuples of q-bit ints; cap the cache at
# a size that stays within tens of megabytes for the default precision.
EXPONENT_CACHE_BUDGET = 1 << 17


def rho(n: int, epsilon: float, delta: float) -> float:
    """Pointwise rate scale: N^(-1/2) log^(3/2+eps) N when delta > 1, and
    N^(-delta/2 + eps) when 0 < delta <= 1.  Natural logarithm."""
    if n < 2:
        raise DomainError("rate scale needs N >= 2")
    if epsilon <= 0 or delta <= 0:
        raise DomainError("epsilon and delta must be positive")
    if delta > 1:
        return n ** -0.5 * math.log(n) ** (1.5 + epsilon)
    return float(n) ** (-delta / 2.0 + epsilon)


@dataclass(frozen=True, eq=False)
class AverageSpec:
    """System, per-factor observables and multipliers, sequence, horizon."""

    system: ShiftSystem | TorusAutomorphism
    observables: tuple[Observable, ...]
    multipliers: tuple[int, ...]
    sequence: SequenceSpec
    n_max: int
    checkpoints: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "observables", tuple(self.observables))
        object.__setattr__(self, "multipliers", tuple(int(m) for m in self.multipliers))
        if not self.observables:
            raise DomainError("need at least one factor")
        if len(self.observables) != len(self.multipliers):
            raise DomainError("need one multiplier per observable")
        if any(m == 0 for m in self.multipliers):
            raise DomainError("multipliers must be nonzero")
        if len(set(self.multipliers)) != len(self.multipliers):
            raise DomainError("multipliers must be pairwise distinct")
        if self.n_max < 2:
            raise DomainError("need n_max >= 2")
        if self.checkpoints is not None:
            cps = tuple(int(c) for c in self.checkpoints)
            if any(b <= a for a, b in zip(cps, cps[1:])) or cps[-1] > self.n_max:
                raise DomainError("checkpoints must strictly increase up to n_max")
            object.__setattr__(self, "checkpoints", cps)
        expected = CYLINDER if isinstance(self.system, ShiftSystem) else TRIG
        if any(obs.variant != expected for obs in self.observables):
            raise VariantMismatch(f"observables must all be {expected} for this system")

    def checkpoint_schedule(self) -> tuple[int, ...]:
        """Dyadic checkpoints by default: powers of two up to n_max, plus n_max."""
        if self.checkpoints is not None:
            return self.checkpoints
        cps = set()
        p = 1
        while p <= self.n_max:
            cps.add(p)
            p *= 2
        cps.add(self.n_max)
        return tuple(sorted(cps))

    def target(self) -> float:
        return float(np.prod([exact_mean(obs, self.system) for obs in self.observables]))

    def required_radius(self) -> int:
        """Largest window radius any evaluation can touch (shift systems)."""
        terms = generate(self.sequence, self.n_max)
        reach = max(abs(m) for m in self.multipliers) * int(terms.max())
        width = max((obs.radius for obs in self.observables), default=0)
        return reach + width


@dataclass(frozen=True)
class AverageSeries:
    """Checkpoint rows (N, A_N, S_N) with S_N = N (A_N - target)."""

    entries: tuple[tuple[int, float, float], ...]
    target: float

    def ns(self) -> tuple[int, ...]:
        return tuple(int(e[0]) for e in self.entries)


def _factor_values_shift(
    spec: AverageSpec, point: ShiftPoint, positions: np.ndarray
) -> np.ndarray:
    values = np.ones(positions.shape[1], dtype=np.float64)
    for i, obs in enumerate(spec.observables):
        values *= cylinder_values_at(point, obs, positions[i])
    return values


def _factor_values_torus(
    spec: AverageSpec,
    point: TorusPoint,
    positions: np.ndarray,
    cache_budget: int,
) -> np.ndarray:
    auto = spec.system
    mod = auto.modulus
    cache: dict[int, intmat.IntMatrix] = {}
    count = positions.shape[1]
    values = np.ones(count, dtype=np.float64)
    for n in range(count):
        prod = 1.0
        for i, obs in enumerate(spec.observables):
            exponent = int(positions[i, n])
            power = cache.get(exponent)
            if power is None:
                if len(cache) >= cache_budget:
                    raise PrecisionBudget(
                        f"exponent cache exceeded {cache_budget} entries"
                    )
                power = torus_matrix_power(auto, exponent)
                cache[exponent] = power
            coords = intmat.mat_vec(power, point.coords, mod)
            prod *= evaluate(obs, TorusPoint(coords, auto.precision_bits))
        values[n] = prod
    return values


def ergodic_average_stream(
    spec: AverageSpec,
    point,
    cache_budget: int = EXPONENT_CACHE_BUDGET,
) -> AverageSeries:
    """Stream F_n = prod_i f_i(h^{m_i r_n} x) and emit checkpoint rows.

    Cylinder factors on shifts are evaluated by vectorized table lookups
    over the whole orbit; torus powers go through an exponent-keyed cache
    of exact modular matrix powers.
    """
    terms = generate(spec.sequence, spec.n_max)
    positions = np.asarray(spec.multipliers, dtype=np.int64)[:, None] * terms[None, :]
    if isinstance(spec.system, ShiftSystem):
        if not isinstance(point, ShiftPoint):
            raise VariantMismatch("shift averages need a ShiftPoint")
        values = _factor_values_shift(spec, point, positions)
    else:
        if not isinstance(point, TorusPoint):
            raise VariantMismatch("torus averages need a TorusPoint")
        values = _factor_values_torus(spec, point, positions, cache_budget)
    target = spec.target()
    sums = np.cumsum(values)
    entries = []
    for n in spec.checkpoint_schedule():
        a_n = float(sums[n - 1]) / n
        entries.append((int(n), a_n, float(sums[n - 1]) - n * target))
    return AverageSeries(entries=tuple(entries), target=target)


def direct_average(spec: AverageSpec, point, n: int) -> float:
    """Brute-force A_n by evaluating each factor pointwise (oracle for tests)."""
    from .systems import shift_apply, torus_apply_power

    terms = generate(spec.sequence, n)
    total = 0.0
    for idx in range(n):
        prod = 1.0
        for obs, mult in zip(spec.observables, spec.multipliers):
            shift = mult * int(terms[idx])
            if isinstance(spec.system, ShiftSystem):
                prod *= evaluate(obs, shift_apply(point, shift))
            else:
                prod *= evaluate(obs, torus_apply_power(spec.system, point, shift))
        total += prod
    return total / n


# ---------------------------------------------------------------------------
# Rate statistics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RateTable:
    """Per-checkpoint normalized errors |A_N - target| / rho(N)."""

    rows: tuple[tuple[int, float], ...]
    max_from: int
    max_statistic: float
    slope: float | None

    def values(self) -> tuple[float, ...]:
        return tuple(v for _, v in self.rows)


def rate_statistic(
    series: AverageSeries,
    epsilon: float,
    delta: float,
    target: float,
    n_from: int = 8,
) -> RateTable:
    """Normalize the average error by the rate scale at every checkpoint
    with N >= 2, and summarize (max from ``n_from`` on, log-log slope)."""
    rows = []
    for n, a_n, _s_n in series.entries:
        if n < 2:
            continue
        rows.append((n, abs(a_n - target) / rho(n, epsilon, delta)))
    if not rows:
        raise DomainError("series has no checkpoints with N >= 2")
    tail = [v for n, v in rows if n >= n_from] or [v for _, v in rows]
    positive = [(n, v) for n, v in rows if v > 0.0]
    slope = None
    if len(positive) >= 2:
        x = np.log([float(n) for n, _ in positive])
        y = np.log([v for _, v in positive])
        design = np.vstack([x, np.ones_like(x)]).T
        coef, *_ = np.linalg.lstsq(design, y, rcond=None)
        slope = float(coef[0])
    return RateTable(
        rows=tuple(rows),
        max_from=n_from,
        max_statistic=float(max(tail)),
        slope=slope,
    )


# ---------------------------------------------------------------------------
# Ensembles
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class EnsembleSummary:
    """Fraction and median trends of the rate statistic over an ensemble.

    Two exceedance curves are reported per checkpoint: the fraction of
    points whose statistic exceeds that same point's value at the
    reference checkpoint, and the fraction exceeding the ensemble median
    at the reference checkpoint.  The per-point curve is dominated by the
    heavy-tailed ratio of two nearly independent CLT fluctuations, so its
    floor is set by that ratio distribution rather than by the rate
    scale; the median-referenced curve tracks the shrinkage of the
    statistic's typical level.
    """

    checkpoints: tuple[int, ...]
    reference_checkpoint: int
    fractions_above_own: tuple[float, ...]
    fractions_above_median: tuple[float, ...]
    medians: tuple[float, ...]
    point_count: int
    epsilon: float
    delta: float
    target: float
    statistics: np.ndarray

    def to_json_dict(self) -> dict:
        return {
            "checkpoints": list(self.checkpoints),
            "reference_checkpoint": self.reference_checkpoint,
            "fractions_above_own": list(self.fractions_above_own),
            "fractions_above_median": list(self.fractions_above_median),
            "medians": list(self.medians),
            "point_count": self.point_count,
            "epsilon": self.epsilon,
            "delta": self.delta,
            "target": self.target,
        }


def sample_spec_point(spec: AverageSpec, seed: int, point_index: int, radius: int | None = None):
    """Deterministic per-point draw from the spec's invariant measure."""
    rng = rng_for(seed, ROLE_POINT, point_index)
    if isinstance(spec.system, ShiftSystem):
        return sample_shift_point(spec.system, radius if radius is not None else spec.required_radius(), rng)
    return sample_torus_point(spec.system, rng)


def ensemble_member_statistics(
    spec: AverageSpec,
    epsilon: float,
    delta: float,
    seed: int,
    point_index: int,
    radius: int | None = None,
) -> tuple[tuple[int, ...], tuple[float, ...]]:
    """Rate-statistic row of one ensemble member (picklable worker task)."""
    point = sample_spec_point(spec, seed, point_index, radius)
    series = ergodic_average_stream(spec, point)
    table = rate_statistic(series, epsilon, delta, series.target)
    return tuple(n for n, _ in table.rows), table.values()


def summarize_ensemble(
    spec: AverageSpec,
    stat_rows: Sequence[Sequence[float]],
    checkpoints: Sequence[int],
    epsilon: float,
    delta: float,
    min_checkpoint: int | None = None,
) -> EnsembleSummary:
    """Aggregate per-point statistic rows into fraction and median trends."""
    stats = np.asarray(stat_rows, dtype=np.float64)
    checkpoints = [int(n) for n in checkpoints]
    keep = [i for i, n in enumerate(checkpoints) if min_checkpoint is None or n >= min_checkpoint]
    if not keep:
        raise DomainError("min_checkpoint filters out every checkpoint")
    stats = stats[:, keep]
    kept = tuple(checkpoints[i] for i in keep)
    reference = stats[:, 0]
    median_ref = float(np.median(reference))
    fractions_own = tuple(float(np.mean(stats[:, j] > reference)) for j in range(stats.shape[1]))
    fractions_med = tuple(float(np.mean(stats[:, j] > median_ref)) for j in range(stats.shape[1]))
    medians = tuple(float(np.median(stats[:, j])) for j in range(stats.shape[1]))
    return EnsembleSummary(
        checkpoints=kept,
        reference_checkpoint=kept[0],
        fractions_above_own=fractions_own,
        fractions_above_median=fractions_med,
        medians=medians,
        point_count=stats.shape[0],
        epsilon=epsilon,
        delta=delta,
        target=spec.target(),
        statistics=stats,
    )


def ensemble_rate_experiment(
    spec: AverageSpec,
    point_count: int,
    epsilon: float,
    delta: float,
    seed: int,
    min_checkpoint: int | None = None,
    radius: int | None = None,
) -> EnsembleSummary:
    """Run independent orbits with per-point derived seeds and report the
    exceedance fractions and medians relative to the first reported
    checkpoint."""
    if point_count < 10:
        raise DomainError("need at least 10 ensemble points")
    if radius is None and isinstance(spec.system, ShiftSystem):
        radius = spec.required_radius()
    rows = []
    checkpoints = None
    for j in range(point_count):
        ns, values = ensemble_member_statistics(spec, epsilon, delta, seed, j, radius)
        if checkpoints is None:
            checkpoints = ns
        rows.append(values)
    return summarize_ensemble(spec, rows, checkpoints, epsilon, delta, min_checkpoint)


# ---------------------------------------------------------------------------
# Term generators for the dyadic variance framework
# ---------------------------------------------------------------------------

def product_term_generator(spec: AverageSpec, master_seed: int):
    """Vectorized (point_indices, ks) -> F matrix callback for dyadic ops.

    F[j, k] is the product of factors at shifts m_i r_k along point j's
    orbit.  Each point's symbols are regenerated deterministically from
    (master_seed, point index), so calls with different k ranges stay
    consistent on shared prefixes.  Shift systems with cylinder factors
    only; use centered observables when the framework expects mean-zero
    terms.
    """
    if not isinstance(spec.system, ShiftSystem):
        raise DomainError("term generators are implemented for shift systems")
    system = spec.system
    m = system.alphabet_size
    pi_cum = np.concatenate([[0.0], np.cumsum(system.stationary)])
    fwd_cum = np.concatenate(
        [np.zeros((m, 1)), np.cumsum(system.transition, axis=1)], axis=1
    )
    bwd_cum = np.concatenate(
        [np.zeros((m, 1)), np.cumsum(system.reversed_transition, axis=1)], axis=1
    )
    width = max(obs.radius for obs in spec.observables)

    def generator(point_indices: np.ndarray, ks: np.ndarray) -> np.ndarray:
        point_indices = np.asarray(point_indices, dtype=np.int64)
        ks = np.asarray(ks, dtype=np.int64)
        terms = generate(spec.sequence, int(ks.max()))
        positions = (
            np.asarray(spec.multipliers, dtype=np.int64)[:, None] * terms[ks - 1][None, :]
        )
        fwd_len = max(int(positions.max()), 0) + width
        bwd_len = max(-int(positions.min()), 0) + width
        count = point_indices.size
        # One uniform block per point, drawn in a fixed layout (origin,
        # forward run, backward run) so path prefixes agree across calls.
        u = np.empty((count, 1 + fwd_len + bwd_len), dtype=np.float64)
        for row, j in enumerate(point_indices):
            u[row] = rng_for(master_seed, ROLE_TERMS, int(j)).random(u.shape[1])
        symbols = np.empty((count, fwd_len + bwd_len + 1), dtype=np.int8)
        origin = bwd_len
        symbols[:, origin] = (u[:, 0][:, None] >= pi_cum[None, 1:-1]).sum(axis=1)
        current = symbols[:, origin].copy()
        for i in range(1, fwd_len + 1):
            rows = fwd_cum[current]
            current = (u[:, i][:, None] >= rows[:, 1:-1]).sum(axis=1).astype(np.int8)
            symbols[:, origin + i] = current
        current = symbols[:, origin].copy()
        for i in range(1, bwd_len + 1):
            rows = bwd_cum[current]
            current = (u[:, fwd_len + i][:, None] >= rows[:, 1:-1]).sum(axis=1).astype(np.int8)
            symbols[:, origin - i] = current
        out = np.ones((count, ks.size), dtype=np.float64)
        from .correlations import _cylinder_lookup

        for i, obs in enumerate(spec.observables):
            w = obs.radius
            lookup = _cylinder_lookup(obs, m)
            codes = np.zeros((count, ks.size), dtype=np.int64)
            for jj in range(2 * w + 1):
                cols = origin + positions[i][None, :] - w + jj
                codes = codes * m + symbols[np.arange(count)[:, None], cols]
            out *= lookup[codes]
        return out

    return generator
