"""Systems module: construction, sampling, exact actions and means."""

import numpy as np
import pytest

from ergolab import systems
from ergolab.errors import (
    DomainError,
    IncompatibleSupport,
    NotAperiodic,
    NotStochastic,
    VariantMismatch,
    WindowExhausted,
)

ONES = [[1, 1], [1, 1]]
MARKOV = [[0.9, 0.1], [0.5, 0.5]]


@pytest.fixture(scope="module")
def markov():
    return systems.build_shift(ONES, MARKOV)


@pytest.fixture(scope="module")
def bernoulli():
    return systems.bernoulli_system([0.5, 0.5])


@pytest.fixture(scope="module")
def cat():
    return systems.build_torus([[2, 1], [1, 1]], 96)


class TestBuildShift:
    def test_markov_stationary(self, markov):
        # pi P = pi with rows (0.9, 0.1), (0.5, 0.5): 0.1 pi0 = 0.5 pi1.
        assert markov.stationary == pytest.approx([5 / 6, 1 / 6], abs=1e-13)

    def test_symmetric_stationary(self, bernoulli):
        assert bernoulli.stationary == pytest.approx([0.5, 0.5], abs=1e-14)

    def test_period_two_rejected(self):
        with pytest.raises(NotAperiodic):
            systems.build_shift([[0, 1], [1, 0]], [[0.0, 1.0], [1.0, 0.0]])

    def test_support_mismatch(self):
        with pytest.raises(IncompatibleSupport):
            systems.build_shift([[1, 1], [1, 1]], [[1.0, 0.0], [0.5, 0.5]])

    def test_row_sum_tolerance(self):
        with pytest.raises(NotStochastic):
            systems.build_shift(ONES, [[0.9, 0.2], [0.5, 0.5]])
        # 1e-10 deviation is accepted and renormalized to machine precision.
        sys1 = systems.build_shift(ONES, [[0.9 + 1e-10, 0.1], [0.5, 0.5]])
        assert np.allclose(sys1.transition.sum(axis=1), 1.0, atol=1e-15)

    def test_stationary_residual(self, markov):
        residual = np.max(np.abs(markov.stationary @ markov.transition - markov.stationary))
        assert residual <= 1e-12
        assert (markov.stationary > 0).all()

    def test_golden_mean_support(self):
        sys1 = systems.build_shift([[1, 1], [1, 0]], [[0.6, 0.4], [1.0, 0.0]])
        assert sys1.transition[1, 1] == 0.0


class TestSampling:
    def test_determinism(self, markov):
        a = systems.sample_shift_point(markov, 40, 123)
        b = systems.sample_shift_point(markov, 40, 123)
        assert (a.symbols == b.symbols).all()

    def test_bernoulli_frequency(self, bernoulli):
        rng = np.random.default_rng(5)
        windows = systems.sample_windows(bernoulli, 0, 10 ** 6, rng)
        freq = float((windows[:, 0] == 1).mean())
        assert abs(freq - 0.5) <= 4 * 0.5 / 1000.0

    def test_markov_origin_frequency(self, markov):
        rng = np.random.default_rng(6)
        windows = systems.sample_windows(markov, 0, 10 ** 6, rng)
        freq = float((windows[:, 0] == 0).mean())
        se = np.sqrt((5 / 6) * (1 / 6) / 10 ** 6)
        assert abs(freq - 5 / 6) <= 4 * se

    def test_forward_transition_frequency(self, markov):
        rng = np.random.default_rng(7)
        windows = systems.sample_windows(markov, 1, 200_000, rng)
        at0 = windows[:, 1] == 0
        freq = float((windows[at0, 2] == 0).mean())
        assert abs(freq - 0.9) <= 4 * np.sqrt(0.09 / at0.sum())

    def test_backward_is_stationary(self, markov):
        # Two-sided law: the word at indices (-1, 0) has probability pi P.
        rng = np.random.default_rng(8)
        windows = systems.sample_windows(markov, 1, 200_000, rng)
        freq = float(((windows[:, 0] == 0) & (windows[:, 1] == 0)).mean())
        assert abs(freq - 0.75) <= 4 * np.sqrt(0.75 * 0.25 / 200_000)

    def test_admissibility(self):
        golden = systems.build_shift([[1, 1], [1, 0]], [[0.6, 0.4], [1.0, 0.0]])
        rng = np.random.default_rng(9)
        windows = systems.sample_windows(golden, 20, 5000, rng)
        pairs = windows[:, :-1] * 2 + windows[:, 1:]
        assert not np.any(pairs == 3)  # word (1, 1) is forbidden


class TestShiftApply:
    def test_identity(self, markov):
        p = systems.sample_shift_point(markov, 10, 1)
        assert systems.shift_apply(p, 0).word(10) == p.word(10)

    def test_composition(self, markov):
        p = systems.sample_shift_point(markov, 10, 1)
        lhs = systems.shift_apply(p, 3 + 4)
        rhs = systems.shift_apply(systems.shift_apply(p, 3), 4)
        assert lhs.offset == rhs.offset
        assert lhs.symbol(0) == rhs.symbol(0)

    def test_window_exhausted(self, markov):
        p = systems.sample_shift_point(markov, 10, 1)
        shifted = systems.shift_apply(p, 11)
        with pytest.raises(WindowExhausted):
            shifted.symbol(0)


class TestTorus:
    def test_identity_power(self, cat):
        p = systems.sample_torus_point(cat, 3)
        assert systems.torus_apply_power(cat, p, 0).coords == p.coords

    def test_cat_half_zero(self, cat):
        p = systems.torus_point_from_fractions(cat, ["1/2", 0])
        q = systems.torus_apply_power(cat, p, 1)
        assert q.as_floats() == (0.0, 0.5)

    def test_semigroup(self, cat):
        p = systems.sample_torus_point(cat, 4)
        once = systems.torus_apply_power(cat, p, 1)
        twice = systems.torus_apply_power(cat, once, 1)
        thrice = systems.torus_apply_power(cat, twice, 1)
        assert systems.torus_apply_power(cat, p, 3).coords == thrice.coords

    def test_inverse_roundtrip(self, cat):
        p = systems.sample_torus_point(cat, 5)
        forward = systems.torus_apply_power(cat, p, 7)
        back = systems.torus_apply_power(cat, forward, -7)
        assert back.coords == p.coords

    def test_non_hyperbolic_rejected(self):
        with pytest.raises(DomainError):
            systems.build_torus([[0, -1], [1, 0]])  # eigenvalues on the circle

    def test_non_unimodular_rejected(self):
        with pytest.raises(DomainError):
            systems.build_torus([[2, 0], [0, 1]])

    def test_bijective_on_lattice(self):
        # Exhaustive at q = 8, d = 2: the action permutes the 2^16 lattice points.
        auto = systems.build_torus([[2, 1], [1, 1]], 8)
        grid = np.arange(256, dtype=np.int64)
        xs, ys = np.meshgrid(grid, grid, indexing="ij")
        nx = (2 * xs + ys) % 256
        ny = (xs + ys) % 256
        images = set(zip(nx.ravel().tolist(), ny.ravel().tolist()))
        assert len(images) == 256 * 256


class TestObservables:
    def test_constant_cylinder(self, markov):
        obs = systems.cylinder_observable(0, {(0,): 3.5, (1,): 3.5})
        p = systems.sample_shift_point(markov, 5, 2)
        assert systems.evaluate(obs, p) == 3.5

    def test_zero_frequency_trig(self, cat):
        obs = systems.trig_observable([((0, 0), 1.0, 0.25)])
        p = systems.sample_torus_point(cat, 6)
        assert systems.evaluate(obs, p) == pytest.approx(1.0)

    def test_cylinder_lookup(self, markov):
        obs = systems.cylinder_observable(0, {(0,): 1.0, (1,): 0.0})
        p = systems.ShiftPoint(symbols=np.array([1], dtype=np.int8), radius=0)
        assert systems.evaluate(obs, p) == 0.0

    def test_variant_mismatch(self, markov, cat):
        obs = systems.cylinder_indicator([0])
        with pytest.raises(VariantMismatch):
            systems.evaluate(obs, systems.sample_torus_point(cat, 1))
        with pytest.raises(VariantMismatch):
            systems.exact_mean(systems.trig_cosine((1, 0)), markov)

    def test_duplicate_frequencies_rejected(self):
        with pytest.raises(DomainError):
            systems.trig_observable([((1, 0), 1.0, 0.0), ((1, 0), 0.5, 0.0)])


class TestExactMean:
    def test_indicator_markov(self, markov):
        assert systems.exact_mean(systems.cylinder_indicator([0]), markov) == pytest.approx(5 / 6)

    def test_trig_no_zero_frequency(self, cat):
        assert systems.exact_mean(systems.trig_cosine((1, 0)), cat) == 0.0

    def test_word_probability(self, markov):
        assert markov.word_probability([0, 0]) == pytest.approx(0.75)
        two = systems.cylinder_indicator([0, 0, 0])
        assert systems.exact_mean(two, markov) == pytest.approx((5 / 6) * 0.9 * 0.9)

    def test_centered_indicator(self, markov):
        obs = systems.centered_cylinder_indicator(markov, [0])
        assert systems.exact_mean(obs, markov) == pytest.approx(0.0, abs=1e-15)

    def test_sampling_consistency(self, markov):
        # Monte Carlo mean of a cylinder observable matches the exact mean.
        obs = systems.cylinder_observable(1, {(0, 0, 1): 2.0, (1, 0, 1): -1.0})
        rng = np.random.default_rng(11)
        windows = systems.sample_windows(markov, 1, 10 ** 6, rng)
        lookup = {(0, 0, 1): 2.0, (1, 0, 1): -1.0}
        values = np.zeros(10 ** 6)
        for word, value in lookup.items():
            mask = np.all(windows == np.array(word, dtype=np.int8), axis=1)
            values[mask] = value
        exact = systems.exact_mean(obs, markov)
        se = values.std(ddof=1) / 1000.0
        assert abs(values.mean() - exact) <= 4 * se

    def test_disjoint_product_independence(self, bernoulli):
        # Product of indicators with disjoint windows under the product
        # measure has mean equal to the product of means.
        left = systems.cylinder_indicator([1])
        product = systems.cylinder_observable(1, {(1, s, 1): 1.0 for s in (0, 1)})
        mean_left = systems.exact_mean(left, bernoulli)
        assert systems.exact_mean(product, bernoulli) == pytest.approx(mean_left ** 2)
