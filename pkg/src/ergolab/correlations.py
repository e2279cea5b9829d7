"""Multiple correlations: Monte Carlo, exact oracles, cumulants, rate fits.

The k-multiple correlation of observables f_0..f_k at pairwise distinct
times is the invariant-measure mean of the product of the shifted
observables; its deviation from the product of means is the mixing
defect.  Three evaluation routes are provided: Monte Carlo sampling, an
exact weighted transfer-matrix sum for cylinder observables on shifts,
and exact character matching for trig polynomials on toral automorphisms.
Joint cumulants are computed combinatorially through the set-partition
identity relating them to joint moments.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from . import intmat
from .errors import (
    DomainError,
    FrequencyOverflow,
    InsufficientData,
    KTooLarge,
    NotCylinder,
    NotTrig,
    SpanTooLarge,
    SubsetMissing,
    VariantMismatch,
)
from .seeding import MC_CHUNK, ROLE_MC, rng_for
from .systems import (
    CYLINDER,
    TRIG,
    Observable,
    ShiftSystem,
    TorusAutomorphism,
    exact_mean,
    sample_windows,
)

DEFAULT_SPAN_LIMIT = 10 ** 6
STATE_LIMIT = 1 << 22
FREQUENCY_BUDGET = 1 << 512
MAX_CUMULANT_ORDER = 10


# ---------------------------------------------------------------------------
# Queries
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CorrelationQuery:
    """System, observables f_0..f_k and pairwise distinct times n_0..n_k.

    Optional per-factor multipliers realize powers of iterates: factor i
    is evaluated at time multipliers[i] * times[i].
    """

    system: ShiftSystem | TorusAutomorphism
    observables: tuple[Observable, ...]
    times: tuple[int, ...]
    multipliers: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "observables", tuple(self.observables))
        object.__setattr__(self, "times", tuple(int(t) for t in self.times))
        if self.multipliers is not None:
            object.__setattr__(
                self, "multipliers", tuple(int(m) for m in self.multipliers)
            )
        if not self.observables:
            raise DomainError("need at least one observable (k >= 0)")
        if len(self.observables) != len(self.times):
            raise DomainError("need one time per observable")
        if self.multipliers is not None and len(self.multipliers) != len(self.times):
            raise DomainError("need one multiplier per observable")
        eff = self.effective_times()
        if len(set(eff)) != len(eff):
            raise DomainError(f"effective times must be pairwise distinct, got {eff}")

    def effective_times(self) -> tuple[int, ...]:
        if self.multipliers is None:
            return self.times
        return tuple(m * t for m, t in zip(self.multipliers, self.times))

    @property
    def order(self) -> int:
        """k in a (k+1)-factor query."""
        return len(self.observables) - 1


def _require_shift_cylinder(query: CorrelationQuery) -> ShiftSystem:
    if not isinstance(query.system, ShiftSystem):
        raise NotCylinder("exact shift oracle requires a ShiftSystem")
    if any(obs.variant != CYLINDER for obs in query.observables):
        raise NotCylinder("exact shift oracle requires cylinder observables")
    return query.system


def _require_torus_trig(query: CorrelationQuery) -> TorusAutomorphism:
    if not isinstance(query.system, TorusAutomorphism):
        raise NotTrig("exact torus oracle requires a TorusAutomorphism")
    if any(obs.variant != TRIG for obs in query.observables):
        raise NotTrig("exact torus oracle requires trig observables")
    return query.system


# ---------------------------------------------------------------------------
# Monte Carlo estimator
# ---------------------------------------------------------------------------

def _window_codes(windows: np.ndarray, start: int, width: int, m: int) -> np.ndarray:
    codes = np.zeros(windows.shape[0], dtype=np.int64)
    for j in range(width):
        codes = codes * m + windows[:, start + j]
    return codes


def _cylinder_lookup(obs: Observable, m: int) -> np.ndarray:
    width = 2 * obs.radius + 1
    lookup = np.full(m ** width, obs.default, dtype=np.float64)
    for word, value in obs.table.items():
        code = 0
        for s in word:
            code = code * m + s
        lookup[code] = value
    return lookup


def _mc_products_shift(
    query: CorrelationQuery, count: int, rng: np.random.Generator
) -> np.ndarray:
    system = query.system
    eff = query.effective_times()
    radius = max(abs(t) + obs.radius for t, obs in zip(eff, query.observables))
    windows = sample_windows(system, radius, count, rng)
    m = system.alphabet_size
    prod = np.ones(count, dtype=np.float64)
    for obs, t in zip(query.observables, eff):
        width = 2 * obs.radius + 1
        start = radius + t - obs.radius
        codes = _window_codes(windows, start, width, m)
        prod *= _cylinder_lookup(obs, m)[codes]
    return prod


def _transformed_terms(
    auto: TorusAutomorphism, obs: Observable, time: int
) -> list[tuple[tuple[int, ...], float, float]]:
    """Frequency vectors pushed through (matrix^T)^time, exactly over Z."""
    transpose = tuple(zip(*auto.matrix))
    if time >= 0:
        power = intmat.mat_pow(transpose, time)
    else:
        power = intmat.mat_pow(intmat.mat_inverse_unimodular(transpose), -time)
    out = []
    for freq, a, b in obs.terms:
        moved = intmat.mat_vec(power, freq)
        if any(abs(x) >= FREQUENCY_BUDGET for x in moved):
            raise FrequencyOverflow("transformed frequency exceeds the budget")
        out.append((moved, a, b))
    return out


def _mc_products_torus(
    query: CorrelationQuery, count: int, rng: np.random.Generator
) -> np.ndarray:
    auto = query.system
    q = auto.precision_bits
    mod = auto.modulus
    factors = [
        _transformed_terms(auto, obs, t)
        for obs, t in zip(query.observables, query.effective_times())
    ]
    words = (q + 63) // 64
    raw = rng.integers(0, 1 << 64, size=(count, auto.dimension, words), dtype=np.uint64)
    prod = np.ones(count, dtype=np.float64)
    two_pi = 2.0 * math.pi
    for s in range(count):
        coords = []
        for i in range(auto.dimension):
            value = 0
            for w in range(words):
                value |= int(raw[s, i, w]) << (64 * w)
            coords.append(value % mod)
        sample_prod = 1.0
        for terms in factors:
            value = 0.0
            for freq, a, b in terms:
                dot = sum(k * c for k, c in zip(freq, coords)) % mod
                phase = two_pi * (dot / mod)
                value += a * math.cos(phase) + b * math.sin(phase)
            sample_prod *= value
        prod[s] = sample_prod
    return prod


def mc_correlation(
    query: CorrelationQuery, samples: int, seed: int
) -> tuple[float, float]:
    """Sample mean and standard error of the product over ``samples`` draws.

    Sampling is chunked with one derived stream per fixed-size chunk and
    reduced in chunk order, so the result is independent of how chunks are
    scheduled over workers.
    """
    if samples < 2:
        raise DomainError("need at least 2 samples")
    if isinstance(query.system, ShiftSystem):
        kernel = _mc_products_shift
        for obs in query.observables:
            if obs.variant != CYLINDER:
                raise VariantMismatch("shift queries need cylinder observables")
    else:
        kernel = _mc_products_torus
        for obs in query.observables:
            if obs.variant != TRIG:
                raise VariantMismatch("torus queries need trig observables")
    total = 0.0
    total_sq = 0.0
    done = 0
    chunk_index = 0
    while done < samples:
        count = min(MC_CHUNK, samples - done)
        rng = rng_for(seed, ROLE_MC, chunk_index)
        prod = kernel(query, count, rng)
        total += float(prod.sum())
        total_sq += float((prod ** 2).sum())
        done += count
        chunk_index += 1
    estimate = total / samples
    var = max((total_sq - samples * estimate ** 2) / (samples - 1), 0.0)
    return estimate, (var / samples) ** 0.5


# ---------------------------------------------------------------------------
# Exact transfer-matrix oracle on shifts
# ---------------------------------------------------------------------------

def exact_correlation_shift(
    query: CorrelationQuery, span_limit: int = DEFAULT_SPAN_LIMIT
) -> float:
    """Exact correlation by a weighted path sum across the index span.

    Dynamic programming over symbol contexts of length K = max word
    length: position by position, the state distribution is advanced by
    the transition matrix and multiplied by each factor's value table at
    the position where its window completes.
    """
    system = _require_shift_cylinder(query)
    eff = query.effective_times()
    lo = min(t - obs.radius for t, obs in zip(eff, query.observables))
    hi = max(t + obs.radius for t, obs in zip(eff, query.observables))
    span = hi - lo + 1
    if span > span_limit:
        raise SpanTooLarge(f"span {span} exceeds the limit {span_limit}")
    m = system.alphabet_size
    context = max(2 * obs.radius + 1 for obs in query.observables)
    if m ** context > STATE_LIMIT:
        raise DomainError(
            f"context state space m^{context} exceeds {STATE_LIMIT} states"
        )

    completions: dict[int, list[Observable]] = {}
    for obs, t in zip(query.observables, eff):
        completions.setdefault(t + obs.radius, []).append(obs)

    transition = system.transition
    vec = system.stationary.copy()
    length = 1
    for obs in completions.get(lo, ()):  # radius-0 factors at the first position
        vec = vec * _cylinder_lookup(obs, m)
    for p in range(lo + 1, hi + 1):
        last = np.arange(vec.size, dtype=np.int64) % m
        vec = (vec[:, None] * transition[last, :]).ravel()
        if length == context:
            # Drop the oldest symbol once the context window is full.
            vec = vec.reshape(m, -1).sum(axis=0)
        else:
            length += 1
        for obs in completions.get(p, ()):
            width = 2 * obs.radius + 1
            lookup = _cylinder_lookup(obs, m)
            codes = np.arange(vec.size, dtype=np.int64) % (m ** width)
            vec = vec * lookup[codes]
    return float(vec.sum())


# ---------------------------------------------------------------------------
# Exact character-matching oracle on the torus
# ---------------------------------------------------------------------------

def _exponential_terms(
    terms: list[tuple[tuple[int, ...], float, float]]
) -> list[tuple[tuple[int, ...], complex]]:
    """Split a real trig polynomial into complex exponential terms."""
    out = []
    for freq, a, b in terms:
        if all(k == 0 for k in freq):
            out.append((freq, complex(a)))  # sin(0) contributes nothing
        else:
            out.append((freq, complex(a, -b) / 2.0))
            out.append((tuple(-k for k in freq), complex(a, b) / 2.0))
    return out


def exact_correlation_torus(query: CorrelationQuery) -> float:
    """Exact correlation by matching pushed-forward character frequencies.

    A tuple of exponential terms contributes exactly when its transformed
    integer frequencies cancel; everything else integrates to zero by
    orthogonality of characters.
    """
    auto = _require_torus_trig(query)
    factor_terms = [
        _exponential_terms(_transformed_terms(auto, obs, t))
        for obs, t in zip(query.observables, query.effective_times())
    ]
    d = auto.dimension
    total = 0.0 + 0.0j
    for combo in itertools.product(*factor_terms):
        freq_sum = [0] * d
        coeff = 1.0 + 0.0j
        for freq, c in combo:
            coeff *= c
            for i in range(d):
                freq_sum[i] += freq[i]
        if all(x == 0 for x in freq_sum):
            total += coeff
    return float(total.real)


# ---------------------------------------------------------------------------
# Mixing defect
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Defect:
    """|correlation - product of means| with its provenance."""

    value: float
    std_error: float
    exact: bool
    correlation: float
    product_of_means: float


def has_exact_oracle(query: CorrelationQuery, span_limit: int = DEFAULT_SPAN_LIMIT) -> bool:
    if isinstance(query.system, ShiftSystem):
        if any(obs.variant != CYLINDER for obs in query.observables):
            return False
        eff = query.effective_times()
        lo = min(t - obs.radius for t, obs in zip(eff, query.observables))
        hi = max(t + obs.radius for t, obs in zip(eff, query.observables))
        return hi - lo + 1 <= span_limit
    return all(obs.variant == TRIG for obs in query.observables)


def exact_correlation(query: CorrelationQuery) -> float:
    if isinstance(query.system, ShiftSystem):
        return exact_correlation_shift(query)
    return exact_correlation_torus(query)


def mixing_defect(
    query: CorrelationQuery,
    means: Sequence[float] | None = None,
    samples: int | None = None,
    seed: int | None = None,
) -> Defect:
    """Defect of the factorization into means, by the exact oracle when one
    applies and by Monte Carlo (with a standard error) otherwise."""
    if means is None:
        means = [exact_mean(obs, query.system) for obs in query.observables]
    product = float(np.prod([float(v) for v in means]))
    if has_exact_oracle(query):
        corr = exact_correlation(query)
        return Defect(
            value=abs(corr - product),
            std_error=0.0,
            exact=True,
            correlation=corr,
            product_of_means=product,
        )
    if samples is None or seed is None:
        raise DomainError(
            "no exact oracle applies (variant mismatch or span over the "
            "transfer limit): supply samples and seed for Monte Carlo"
        )
    estimate, std_error = mc_correlation(query, samples, seed)
    return Defect(
        value=abs(estimate - product),
        std_error=std_error,
        exact=False,
        correlation=estimate,
        product_of_means=product,
    )


# ---------------------------------------------------------------------------
# Rate fits
# ---------------------------------------------------------------------------

POLYNOMIAL_MODEL = "polynomial"
EXPONENTIAL_MODEL = "exponential"
DEGENERATE_MODEL = "degenerate"

RSS_TIE = 1e-9


@dataclass(frozen=True)
class RateFit:
    """Fitted decay (or growth) exponent with residuals, never hidden.

    polynomial model: data ~ amplitude * x^(-exponent) (sigma_fit stores a
    growth slope here instead, see its docstring).  exponential model:
    data ~ amplitude * exp(-exponent * x).  degenerate: every data point
    vanished exactly, amplitude 0 and no exponent.
    """

    model: str
    exponent: float | None
    amplitude: float
    rss: float
    data_range: tuple[float, float]
    n_points: int
    dropped_zeros: int = 0
    alternate: "RateFit | None" = None

    def to_json_dict(self) -> dict:
        out = {
            "model": self.model,
            "exponent": self.exponent,
            "amplitude": self.amplitude,
            "rss": self.rss,
            "data_range": list(self.data_range),
            "n_points": self.n_points,
            "dropped_zeros": self.dropped_zeros,
        }
        if self.alternate is not None:
            alt = self.alternate.to_json_dict()
            alt.pop("alternate", None)
            out["alternate"] = alt
        return out


def _fit_single(
    xs: np.ndarray, ys: np.ndarray, model: str, dropped: int
) -> RateFit:
    predictor = np.log(xs) if model == POLYNOMIAL_MODEL else xs
    design = np.vstack([predictor, np.ones_like(predictor)]).T
    coef, *_ = np.linalg.lstsq(design, np.log(ys), rcond=None)
    resid = np.log(ys) - design @ coef
    return RateFit(
        model=model,
        exponent=float(-coef[0]),
        amplitude=float(np.exp(coef[1])),
        rss=float(resid @ resid),
        data_range=(float(xs.min()), float(xs.max())),
        n_points=int(xs.size),
        dropped_zeros=dropped,
    )


def fit_decay(xs: Sequence[float], ys: Sequence[float]) -> RateFit:
    """Fit |data| against both decay models on log scale and keep the one
    with the smaller residual; ties within 1e-9 attach the other fit.

    Zero data points are dropped and counted (log of an exact zero is the
    honest failure mode of exact cancellation, not noise).
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.abs(np.asarray(ys, dtype=np.float64))
    if xs.size != ys.size or xs.size == 0:
        raise DomainError("need matching nonempty x and y data")
    keep = ys > 0.0
    dropped = int((~keep).sum())
    if keep.sum() < 2:
        lo = float(xs.min()) if xs.size else 0.0
        hi = float(xs.max()) if xs.size else 0.0
        return RateFit(
            model=DEGENERATE_MODEL,
            exponent=None,
            amplitude=0.0,
            rss=0.0,
            data_range=(lo, hi),
            n_points=int(xs.size),
            dropped_zeros=dropped,
        )
    xs, ys = xs[keep], ys[keep]
    poly = _fit_single(xs, ys, POLYNOMIAL_MODEL, dropped)
    expo = _fit_single(xs, ys, EXPONENTIAL_MODEL, dropped)
    if abs(poly.rss - expo.rss) <= RSS_TIE * max(1.0, poly.rss, expo.rss):
        best, other = (expo, poly) if expo.rss <= poly.rss else (poly, expo)
        return RateFit(**{**best.__dict__, "alternate": other})
    return expo if expo.rss < poly.rss else poly


def min_gap_decay_check(
    system,
    observables: Sequence[Observable],
    time_tuples: Sequence[Sequence[int]],
    multipliers: Sequence[int] | None = None,
    samples: int | None = None,
    seed: int | None = None,
) -> RateFit:
    """Fit the mixing defect against the minimal pairwise time gap.

    Tuples must come with strictly increasing min-gap values so the fit
    spans a genuine range of scales.
    """
    if len(time_tuples) < 4:
        raise InsufficientData("need at least 4 time tuples")
    gaps = []
    defects = []
    for times in time_tuples:
        query = CorrelationQuery(
            system=system,
            observables=tuple(observables),
            times=tuple(times),
            multipliers=tuple(multipliers) if multipliers is not None else None,
        )
        eff = query.effective_times()
        gap = min(
            abs(a - b) for a, b in itertools.combinations(eff, 2)
        ) if len(eff) > 1 else min(abs(t) for t in eff)
        gaps.append(gap)
        defects.append(mixing_defect(query, samples=samples, seed=seed).value)
    if any(b <= a for a, b in zip(gaps, gaps[1:])):
        raise DomainError(f"min-gap values must be strictly increasing, got {gaps}")
    return fit_decay(gaps, defects)


# ---------------------------------------------------------------------------
# Joint cumulants via set partitions
# ---------------------------------------------------------------------------

def set_partitions(items: Iterable[int]) -> Iterator[tuple[tuple[int, ...], ...]]:
    """All partitions of a finite set, by restricted-growth enumeration."""
    items = list(items)

    def rec(i: int, blocks: list[list[int]]) -> Iterator[tuple[tuple[int, ...], ...]]:
        if i == len(items):
            yield tuple(tuple(b) for b in blocks)
            return
        x = items[i]
        for block in blocks:
            block.append(x)
            yield from rec(i + 1, blocks)
            block.pop()
        blocks.append([x])
        yield from rec(i + 1, blocks)
        blocks.pop()

    if not items:
        yield ()
        return
    yield from rec(0, [])


def _subset_partitions(order: int, _cache: dict = {}) -> dict:
    """For every nonempty subset of {0..order}, its set partitions with
    blocks as frozensets.  Enumerated once per order and reused; the total
    count is a Bell number, small for the guarded orders."""
    if order not in _cache:
        table = {}
        indices = list(range(order + 1))
        for size in range(1, order + 2):
            for combo in itertools.combinations(indices, size):
                table[frozenset(combo)] = tuple(
                    tuple(frozenset(block) for block in partition)
                    for partition in set_partitions(combo)
                )
        _cache[order] = table
    return _cache[order]


def _normalize_table(table: Mapping) -> tuple[dict[frozenset, float], int]:
    data = {}
    for key, value in table.items():
        subset = frozenset(int(i) for i in (key if not isinstance(key, int) else (key,)))
        if not subset:
            raise DomainError("subset keys must be nonempty")
        data[subset] = float(value)
    ground = sorted(set().union(*data.keys()))
    order = max(ground)
    if set(ground) != set(range(order + 1)):
        raise SubsetMissing(f"ground set must be 0..{order}, got {ground}")
    if order > MAX_CUMULANT_ORDER:
        raise KTooLarge(f"order {order} exceeds the guard {MAX_CUMULANT_ORDER}")
    indices = list(range(order + 1))
    for size in range(1, order + 2):
        for combo in itertools.combinations(indices, size):
            if frozenset(combo) not in data:
                raise SubsetMissing(f"missing value for subset {combo}")
    return data, order


@dataclass(frozen=True, eq=False)
class CumulantTable:
    """Joint moments and cumulants for every nonempty subset of {0..order}.

    The two tables satisfy the partition identity: each moment equals the
    sum over set partitions of the products of block cumulants.
    """

    order: int
    moments: dict
    cumulants: dict

    def moment(self, subset) -> float:
        return self.moments[frozenset(subset)]

    def cumulant(self, subset) -> float:
        return self.cumulants[frozenset(subset)]

    def full_cumulant(self) -> float:
        return self.cumulants[frozenset(range(self.order + 1))]


def moments_to_cumulants(moments: Mapping) -> CumulantTable:
    """Invert the partition identity by recursion over subset sizes."""
    table, order = _normalize_table(moments)
    partitions = _subset_partitions(order)
    cumulants: dict[frozenset, float] = {}
    for subset in sorted(table.keys(), key=len):
        total = 0.0
        for partition in partitions[subset]:
            if len(partition) == 1:
                continue
            prod = 1.0
            for block in partition:
                prod *= cumulants[block]
            total += prod
        cumulants[subset] = table[subset] - total
    return CumulantTable(order=order, moments=dict(table), cumulants=cumulants)


def cumulants_to_moments(cumulants: Mapping) -> dict:
    """Moments as sums over set partitions of products of block cumulants."""
    table, order = _normalize_table(cumulants)
    partitions = _subset_partitions(order)
    moments: dict[frozenset, float] = {}
    for subset in sorted(table.keys(), key=len):
        total = 0.0
        for partition in partitions[subset]:
            prod = 1.0
            for block in partition:
                prod *= table[block]
            total += prod
        moments[subset] = total
    return moments


def joint_moment_table(
    system,
    observables: Sequence[Observable],
    times: Sequence[int],
    multipliers: Sequence[int] | None = None,
) -> dict:
    """Exact joint moments of f_i(h^{t_i} x) for every nonempty index subset."""
    observables = tuple(observables)
    times = tuple(int(t) for t in times)
    multipliers = tuple(multipliers) if multipliers is not None else None
    indices = range(len(observables))
    table = {}
    for size in range(1, len(observables) + 1):
        for combo in itertools.combinations(indices, size):
            query = CorrelationQuery(
                system=system,
                observables=tuple(observables[i] for i in combo),
                times=tuple(times[i] for i in combo),
                multipliers=tuple(multipliers[i] for i in combo)
                if multipliers is not None
                else None,
            )
            table[frozenset(combo)] = exact_correlation(query)
    return table


def joint_cumulants(
    system,
    observables: Sequence[Observable],
    times: Sequence[int],
    multipliers: Sequence[int] | None = None,
) -> CumulantTable:
    return moments_to_cumulants(joint_moment_table(system, observables, times, multipliers))


def cumulant_decay_scan(
    system,
    observables: Sequence[Observable],
    time_tuples: Sequence[Sequence[int]],
    multipliers: Sequence[int] | None = None,
) -> tuple[RateFit, list[dict]]:
    """Exact top cumulants over a grid of time tuples, fitted exponentially
    against the largest recentred time offset max_i |t_i - t_0|."""
    rows = []
    xs = []
    ys = []
    for times in time_tuples:
        table = joint_cumulants(system, observables, times, multipliers)
        kappa = table.full_cumulant()
        eff = list(times)
        if multipliers is not None:
            eff = [m * t for m, t in zip(multipliers, times)]
        x = max(abs(t - eff[0]) for t in eff)
        rows.append(
            {
                "times": tuple(int(t) for t in times),
                "x": x,
                "moment": table.moment(range(len(times))),
                "cumulant": kappa,
            }
        )
        xs.append(x)
        ys.append(abs(kappa))
    keep = [i for i, y in enumerate(ys) if y > 0.0]
    dropped = len(ys) - len(keep)
    if len(keep) < 2:
        fit = RateFit(
            model=DEGENERATE_MODEL,
            exponent=None,
            amplitude=0.0,
            rss=0.0,
            data_range=(float(min(xs)), float(max(xs))) if xs else (0.0, 0.0),
            n_points=len(xs),
            dropped_zeros=dropped,
        )
    else:
        fit = _fit_single(
            np.asarray([xs[i] for i in keep], dtype=np.float64),
            np.asarray([ys[i] for i in keep], dtype=np.float64),
            EXPONENTIAL_MODEL,
            dropped,
        )
    return fit, rows
