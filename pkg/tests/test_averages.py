"""Averages: rate scale, streaming, rate statistics, ensembles."""

import math

import numpy as np
import pytest

from ergolab import averages, correlations as co, sequences, systems
from ergolab.averages import AverageSpec, ergodic_average_stream, rate_statistic, rho
from ergolab.errors import DomainError, PrecisionBudget, VariantMismatch, WindowExhausted
from ergolab.sequences import SequenceSpec

MARKOV = [[0.9, 0.1], [0.5, 0.5]]


@pytest.fixture(scope="module")
def markov():
    return systems.build_shift([[1, 1], [1, 1]], MARKOV)


@pytest.fixture(scope="module")
def bernoulli():
    return systems.bernoulli_system([0.5, 0.5])


@pytest.fixture(scope="module")
def cat():
    return systems.build_torus([[2, 1], [1, 1]], 64)


def make_spec(system, observables, multipliers, n_max, kind="linear"):
    return AverageSpec(
        system=system,
        observables=tuple(observables),
        multipliers=tuple(multipliers),
        sequence=SequenceSpec(kind=kind),
        n_max=n_max,
    )


class TestRho:
    def test_fast_regime_value(self):
        # delta > 1: N^(-1/2) (ln N)^(3/2 + eps); at N=100, eps=0.5 the log
        # power is 2, giving 0.1 * ln(100)^2.
        assert rho(100, 0.5, 2.0) == pytest.approx(0.1 * math.log(100) ** 2)
        assert rho(100, 0.5, 2.0) == pytest.approx(2.1207592, rel=1e-6)

    def test_slow_regime_value(self):
        assert rho(10 ** 4, 0.25, 1.0) == pytest.approx(0.1)

    def test_decreasing_on_dyadic_grid(self):
        # Strictly decreasing once ln N > 3 + 2 eps; at eps = 1 that is
        # N > e^5 ~ 148, so check the dyadic grid from 2^8 on.
        values = [rho(1 << j, 1.0, 2.0) for j in range(8, 24)]
        assert all(b < a for a, b in zip(values, values[1:]))
        small = [rho(1 << j, 0.1, 2.0) for j in range(5, 24)]  # e^3.2 ~ 25
        assert all(b < a for a, b in zip(small, small[1:]))

    def test_domain(self):
        with pytest.raises(DomainError):
            rho(1, 0.5, 2.0)
        with pytest.raises(DomainError):
            rho(100, -0.1, 2.0)
        with pytest.raises(DomainError):
            rho(100, 0.5, 0.0)


class TestSpecValidation:
    def test_duplicate_multipliers(self, bernoulli):
        f = systems.cylinder_indicator([0])
        with pytest.raises(DomainError):
            make_spec(bernoulli, [f, f], (2, 2), 16)

    def test_zero_multiplier(self, bernoulli):
        f = systems.cylinder_indicator([0])
        with pytest.raises(DomainError):
            make_spec(bernoulli, [f], (0,), 16)

    def test_variant_checked(self, bernoulli):
        with pytest.raises(VariantMismatch):
            make_spec(bernoulli, [systems.trig_cosine((1, 0))], (1,), 16)

    def test_checkpoint_schedule(self, bernoulli):
        f = systems.cylinder_indicator([0])
        spec = make_spec(bernoulli, [f], (1,), 100)
        schedule = spec.checkpoint_schedule()
        assert schedule[0] == 1 and schedule[-1] == 100
        assert 64 in schedule and 128 not in schedule

    def test_required_radius(self, bernoulli):
        f = systems.cylinder_observable(3, {})
        spec = AverageSpec(
            system=bernoulli,
            observables=(f, systems.cylinder_indicator([0])),
            multipliers=(1, 2),
            sequence=SequenceSpec(kind="polynomial", coefficients=(0, 0, 1)),
            n_max=1 << 10,
        )
        assert spec.required_radius() == 2 * (1 << 10) ** 2 + 3


class TestStream:
    def test_constant_factor(self, markov):
        obs = systems.cylinder_observable(0, {(0,): 2.0, (1,): 2.0})
        spec = make_spec(markov, [obs], (1,), 64)
        point = averages.sample_spec_point(spec, 0, 0)
        series = ergodic_average_stream(spec, point)
        for n, a_n, s_n in series.entries:
            assert a_n == pytest.approx(2.0)
            assert s_n == pytest.approx(0.0, abs=1e-12)

    def test_disjoint_coordinates_have_zero_mean(self, bernoulli):
        # With multipliers (1, 2) and r_n = n the two factors read distinct
        # coordinates for every n, so each term has exact mean zero.
        f = systems.centered_cylinder_indicator(bernoulli, [1])
        for n in (1, 2, 5, 9):
            value = co.exact_correlation_shift(
                co.CorrelationQuery(
                    system=bernoulli, observables=(f, f), times=(n, 2 * n)
                )
            )
            assert abs(value) <= 1e-15

    def test_stream_matches_direct(self, markov):
        f = systems.cylinder_observable(1, {(0, 0, 1): 1.0, (1, 0, 0): -2.0})
        g = systems.cylinder_indicator([0])
        spec = AverageSpec(
            system=markov,
            observables=(f, g),
            multipliers=(1, -2),
            sequence=SequenceSpec(kind="primes"),
            n_max=1 << 10,
        )
        point = averages.sample_spec_point(spec, 3, 0)
        series = ergodic_average_stream(spec, point)
        direct = averages.direct_average(spec, point, 1 << 10)
        assert series.entries[-1][1] == pytest.approx(direct, rel=1e-12)

    def test_torus_stream_matches_direct(self, cat):
        f = systems.trig_observable([((1, 0), 1.0, 0.5), ((0, 1), -0.25, 0.0)])
        spec = make_spec(cat, [f], (1,), 128)
        point = averages.sample_spec_point(spec, 4, 0)
        series = ergodic_average_stream(spec, point)
        assert series.entries[-1][1] == pytest.approx(
            averages.direct_average(spec, point, 128), rel=1e-12
        )

    def test_centered_identity(self, markov):
        f = systems.cylinder_indicator([0])
        spec = make_spec(markov, [f], (1,), 512)
        point = averages.sample_spec_point(spec, 7, 0)
        series = ergodic_average_stream(spec, point)
        for n, a_n, s_n in series.entries:
            assert s_n == pytest.approx(n * (a_n - series.target), rel=1e-12, abs=1e-12)

    def test_checkpoints_strictly_increase(self, markov):
        f = systems.cylinder_indicator([0])
        spec = make_spec(markov, [f], (1,), 100)
        point = averages.sample_spec_point(spec, 1, 0)
        ns = ergodic_average_stream(spec, point).ns()
        assert all(b > a for a, b in zip(ns, ns[1:]))

    def test_multiplier_permutation(self, bernoulli):
        f = systems.cylinder_indicator([1])
        g = systems.centered_cylinder_indicator(bernoulli, [0])
        spec_a = make_spec(bernoulli, [f, g], (1, 3), 128)
        spec_b = make_spec(bernoulli, [g, f], (3, 1), 128)
        point = averages.sample_spec_point(spec_a, 9, 0, radius=spec_a.required_radius())
        series_a = ergodic_average_stream(spec_a, point)
        series_b = ergodic_average_stream(spec_b, point)
        assert series_a.entries == series_b.entries

    def test_window_exhausted(self, markov):
        f = systems.cylinder_indicator([0])
        spec = make_spec(markov, [f], (1,), 64)
        point = systems.sample_shift_point(markov, 10, 0)
        with pytest.raises(WindowExhausted):
            ergodic_average_stream(spec, point)

    def test_precision_budget(self, cat):
        f = systems.trig_cosine((1, 0))
        spec = make_spec(cat, [f], (1,), 64)
        point = averages.sample_spec_point(spec, 0, 0)
        with pytest.raises(PrecisionBudget):
            ergodic_average_stream(spec, point, cache_budget=4)

    def test_markov_birkhoff_concentration(self, markov):
        # CLT scale: |A_N - 5/6| < 0.01 at N = 2^14 for >= 95% of seeds.
        f = systems.cylinder_indicator([0])
        spec = make_spec(markov, [f], (1,), 1 << 14)
        hits = 0
        for seed in range(100):
            point = averages.sample_spec_point(spec, seed, seed, radius=1 << 14)
            series = ergodic_average_stream(spec, point)
            if abs(series.entries[-1][1] - 5 / 6) < 0.01:
                hits += 1
        assert hits >= 95


class TestRateStatistic:
    def test_constant_observable_zero(self, markov):
        obs = systems.cylinder_observable(0, {(0,): 1.0, (1,): 1.0})
        spec = make_spec(markov, [obs], (1,), 256)
        point = averages.sample_spec_point(spec, 0, 0)
        series = ergodic_average_stream(spec, point)
        table = rate_statistic(series, 1.0, 2.0, series.target)
        assert all(v == 0.0 for v in table.values())
        assert table.slope is None

    def test_centered_slope_negative_majority(self, bernoulli):
        f = systems.centered_cylinder_indicator(bernoulli, [1])
        spec = make_spec(bernoulli, [f], (1,), 1 << 14)
        negative = 0
        for seed in range(15):
            point = averages.sample_spec_point(spec, seed, seed, radius=1 << 14)
            series = ergodic_average_stream(spec, point)
            table = rate_statistic(series, 1.0, 2.0, series.target)
            if table.slope is not None and table.slope < 0:
                negative += 1
        assert negative > 7

    def test_biased_target_positive_slope(self, markov):
        # A constant bias dominates: the statistic tracks 0.1 / rho(N),
        # which grows once past the rate scale's initial hump.
        f = systems.cylinder_indicator([0])
        spec = AverageSpec(
            system=markov,
            observables=(f,),
            multipliers=(1,),
            sequence=SequenceSpec(kind="linear"),
            n_max=1 << 15,
            checkpoints=tuple(1 << j for j in range(8, 16)),
        )
        point = averages.sample_spec_point(spec, 2, 0)
        series = ergodic_average_stream(spec, point)
        table = rate_statistic(series, 1.0, 2.0, series.target + 0.1)
        assert table.slope is not None and table.slope > 0


class TestEnsemble:
    def test_constant_fractions_zero(self, markov):
        obs = systems.cylinder_observable(0, {(0,): 1.0, (1,): 1.0})
        spec = make_spec(markov, [obs], (1,), 64)
        summary = averages.ensemble_rate_experiment(spec, 10, 1.0, 2.0, seed=5)
        assert all(f == 0.0 for f in summary.fractions_above_own)
        assert all(m == 0.0 for m in summary.medians)

    def test_min_checkpoint_filter(self, bernoulli):
        f = systems.centered_cylinder_indicator(bernoulli, [1])
        spec = make_spec(bernoulli, [f], (1,), 256)
        summary = averages.ensemble_rate_experiment(
            spec, 10, 1.0, 2.0, seed=5, min_checkpoint=32
        )
        assert summary.checkpoints[0] == 32
        assert summary.reference_checkpoint == 32
        assert summary.fractions_above_own[0] == 0.0

    def test_determinism(self, bernoulli):
        f = systems.centered_cylinder_indicator(bernoulli, [1])
        spec = make_spec(bernoulli, [f], (1,), 128)
        a = averages.ensemble_rate_experiment(spec, 12, 1.0, 2.0, seed=8)
        b = averages.ensemble_rate_experiment(spec, 12, 1.0, 2.0, seed=8)
        assert np.array_equal(a.statistics, b.statistics)

    def test_point_count_floor(self, bernoulli):
        f = systems.centered_cylinder_indicator(bernoulli, [1])
        spec = make_spec(bernoulli, [f], (1,), 64)
        with pytest.raises(DomainError):
            averages.ensemble_rate_experiment(spec, 5, 1.0, 2.0, seed=1)

    @pytest.mark.parametrize("kind", ["linear", "primes"])
    def test_fraction_trend_over_last_checkpoints(self, bernoulli, kind):
        # The per-point exceedance fraction drifts down as the statistic
        # shrinks; allow one ensemble point of jitter at this resolution.
        f = systems.centered_cylinder_indicator(bernoulli, [1])
        g = systems.centered_cylinder_indicator(bernoulli, [0])
        spec = AverageSpec(
            system=bernoulli,
            observables=(f, g),
            multipliers=(1, 2),
            sequence=SequenceSpec(kind=kind),
            n_max=1 << 11,
        )
        summary = averages.ensemble_rate_experiment(
            spec, 60, 1.0, 2.0, seed=17, min_checkpoint=16
        )
        tolerance = 1.0 / summary.point_count
        tail = summary.fractions_above_own[-3:]
        assert all(b <= a + tolerance for a, b in zip(tail, tail[1:]))


class TestTermGenerator:
    def test_matches_streamed_products(self, bernoulli):
        f = systems.centered_cylinder_indicator(bernoulli, [1])
        g = systems.centered_cylinder_indicator(bernoulli, [0])
        spec = make_spec(bernoulli, [f, g], (1, 2), 64)
        generator = averages.product_term_generator(spec, master_seed=33)
        ks = np.arange(1, 65, dtype=np.int64)
        first = generator(np.array([0, 1]), ks)
        again = generator(np.array([0, 1]), ks)
        assert np.array_equal(first, again)
        # Prefix consistency between calls with different horizons.
        short = generator(np.array([0, 1]), np.arange(1, 33, dtype=np.int64))
        assert np.array_equal(first[:, :32], short)

    def test_term_values_in_product_range(self, bernoulli):
        f = systems.centered_cylinder_indicator(bernoulli, [1])
        spec = make_spec(bernoulli, [f, f], (1, 2), 32)
        generator = averages.product_term_generator(spec, master_seed=1)
        block = generator(np.arange(8), np.arange(1, 33, dtype=np.int64))
        assert np.all(np.abs(block) <= 0.25 + 1e-12)
