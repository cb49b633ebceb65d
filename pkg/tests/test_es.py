import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bilevel_es import (
    CENTERED_RANK,
    RAW,
    ConfigError,
    EsConfig,
    EvaluationError,
    HyperParams,
    InvariantError,
    centered_ranks,
    es_step,
    estimate_search_gradient,
    sample_population,
)
from bilevel_es.rand import rng_for


def sphere(theta, seed=0):
    theta = np.asarray(theta)
    return -float(theta @ theta)


class TestSamplePopulation:
    def test_zero_sigma_test_mode(self):
        theta = np.array([1.0, -2.0])
        eps, perturbed = sample_population(
            rng_for(0), theta, 0.0, 4, allow_zero_sigma=True
        )
        assert np.all(perturbed == theta)

    def test_zero_sigma_rejected_by_default(self):
        with pytest.raises(ConfigError):
            sample_population(rng_for(0), np.zeros(2), 0.0, 4)

    def test_negative_sigma_rejected(self):
        with pytest.raises(ConfigError):
            sample_population(rng_for(0), np.zeros(2), -0.1, 4)

    def test_determinism(self):
        theta = np.arange(3, dtype=float)
        a = sample_population(rng_for(7, "x"), theta, 0.1, 8)
        b = sample_population(rng_for(7, "x"), theta, 0.1, 8)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])

    def test_moments(self):
        # Law of large numbers: per-coordinate mean ~0, variance ~1.
        eps, _ = sample_population(rng_for(3), np.zeros(2), 1.0, 10_000)
        assert np.all(np.abs(eps.mean(axis=0)) < 0.05)
        assert np.all(np.abs(eps.var(axis=0) - 1.0) < 0.05)

    def test_antithetic_pairs(self):
        eps, _ = sample_population(rng_for(1), np.zeros(3), 0.5, 10, antithetic=True)
        assert np.array_equal(eps[:5], -eps[5:])

    def test_antithetic_odd_population_rejected(self):
        with pytest.raises(ConfigError):
            sample_population(rng_for(1), np.zeros(3), 0.5, 9, antithetic=True)

    def test_returns_exactly_n_pairs(self):
        eps, perturbed = sample_population(rng_for(0), np.zeros(4), 0.2, 11)
        assert eps.shape == (11, 4) and perturbed.shape == (11, 4)


class TestCenteredRanks:
    def test_constant_vector_is_exactly_zero(self):
        shaped = centered_ranks(np.full(7, 3.25))
        assert np.all(shaped == 0.0)

    def test_range_and_zero_sum(self):
        shaped = centered_ranks(np.array([5.0, -1.0, 3.0, 0.0]))
        assert shaped.sum() == pytest.approx(0.0, abs=1e-15)
        assert shaped.min() == -0.5 and shaped.max() == 0.5

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=40))
    def test_sum_zero_property(self, values):
        shaped = centered_ranks(np.array(values))
        assert abs(shaped.sum()) < 1e-12

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.integers(-1000, 1000), min_size=2, max_size=30, unique=True))
    def test_monotone_transform_invariance(self, values):
        # Strictly monotone rescaling of distinct fitnesses leaves ranks alone.
        f = np.array(values, dtype=float)
        assert np.allclose(centered_ranks(f), centered_ranks(np.exp(f / 200.0)))


class TestSearchGradient:
    def test_hand_computed_two_individuals(self):
        # (1/(n*sigma)) * sum f_i eps_i with n=2, sigma=1.
        eps = np.array([[1.0, 0.0], [0.0, 1.0]])
        f = np.array([1.0, 0.0])
        grad = estimate_search_gradient(eps, f, 1.0, RAW)
        assert np.array_equal(grad, np.array([0.5, 0.0]))

    def test_constant_fitness_centered_rank_zero(self):
        eps = rng_for(0).standard_normal((16, 3))
        grad = estimate_search_gradient(eps, np.full(16, 2.0), 0.1, CENTERED_RANK)
        assert np.all(grad == 0.0)

    def test_length_mismatch(self):
        with pytest.raises(InvariantError):
            estimate_search_gradient(np.zeros((3, 2)), np.zeros(4), 0.1)

    def test_quadratic_gradient_oracle(self):
        # Analytic gradient of f = -||theta||^2 at (1,1) is (-2,-2).
        theta = np.array([1.0, 1.0])
        sigma = 0.1
        eps, perturbed = sample_population(rng_for(11), theta, sigma, 100_000)
        f = -(perturbed**2).sum(axis=1)
        grad = estimate_search_gradient(eps, f, sigma, RAW)
        assert np.linalg.norm(grad - (-2, -2)) / np.linalg.norm((-2, -2)) < 0.05

    def test_error_decreases_with_population(self):
        # O(1/sqrt(n)) convergence: median error shrinks across decades of n.
        theta = np.array([1.0, 1.0])
        sigma = 0.1
        target = np.array([-2.0, -2.0])
        medians = []
        for n in (1_000, 10_000, 100_000):
            errors = []
            for trial in range(20):
                eps, perturbed = sample_population(
                    rng_for(5, n, trial), theta, sigma, n
                )
                f = -(perturbed**2).sum(axis=1)
                grad = estimate_search_gradient(eps, f, sigma, RAW)
                errors.append(np.linalg.norm(grad - target))
            medians.append(np.median(errors))
        assert medians[0] > medians[1] > medians[2]

    def test_antithetic_constant_fitness_cancels(self):
        eps, _ = sample_population(rng_for(2), np.zeros(4), 0.3, 12, antithetic=True)
        grad = estimate_search_gradient(eps, np.full(12, 5.0), 0.3, RAW)
        assert np.allclose(grad, 0.0, atol=1e-12)


class TestEsStep:
    cfg = EsConfig(n=20, seed=0)

    def test_constant_landscape_centered_rank_fixed_point(self):
        theta = np.array([0.5, -0.5])
        h = HyperParams(sigma=0.05, alpha=0.02)
        theta2, fits, ret = es_step(
            theta, self.cfg, h, lambda p, s: 1.0, (0, "inner", 0)
        )
        assert np.array_equal(theta2, theta)
        assert ret == 1.0 and np.all(fits == 1.0)

    def test_zero_alpha_no_step(self):
        theta = np.array([3.0, 4.0])
        h = HyperParams(sigma=0.05, alpha=0.0)
        theta2, _, _ = es_step(theta, self.cfg, h, sphere, (0, "inner", 0))
        assert np.array_equal(theta2, theta)

    def test_non_finite_fitness_reports_index(self):
        def bad(p, s):
            return np.nan if p[0] > 0 else 0.0

        h = HyperParams(sigma=1.0, alpha=0.02)
        with pytest.raises(EvaluationError) as err:
            es_step(np.zeros(2), self.cfg, h, bad, (0, "inner", 0))
        assert err.value.index is not None

    def test_deterministic_trajectory(self):
        h = HyperParams(sigma=0.05, alpha=0.02)

        def run():
            theta = np.array([2.0, -1.0])
            for t in range(5):
                theta, _, _ = es_step(theta, self.cfg, h, sphere, (9, "inner", t))
            return theta

        assert np.array_equal(run(), run())

    def test_sphere_convergence_default_config(self):
        # Convergence oracle: defaults (n=200, alpha=0.02, sigma=0.05),
        # 400 iterations from (5, 5) reach ||theta|| < 0.5 on every seed.
        cfg = EsConfig()
        h = HyperParams(sigma=cfg.sigma, alpha=cfg.alpha)
        for seed in range(1, 6):
            theta = np.array([5.0, 5.0])
            for t in range(400):
                theta, _, _ = es_step(theta, cfg, h, sphere, (seed, "inner", t))
            assert np.linalg.norm(theta) < 0.5, f"seed {seed}"


class TestEsConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"n": 1},
            {"sigma": 0.0},
            {"sigma": -1.0},
            {"alpha": -0.1},
            {"gamma": 0.0},
            {"gamma": 1.5},
            {"fitness_shaping": "softmax"},
            {"antithetic": True, "n": 5},
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            EsConfig(**kwargs)
