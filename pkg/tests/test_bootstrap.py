"""Gaussian regression bootstrapping."""

import numpy as np
import pytest

import oracles
from statdse.bootstrap import BootstrapConfig, NoiseMode, bootstrap_sample, sample_posterior
from statdse.errors import ArgumentError, ConfigurationError
from statdse.gp import KernelSpec, fit_gp, posterior
from statdse.space import DesignSpace, Parameter


@pytest.fixture
def model():
    space = DesignSpace([Parameter(f"x{i}", tuple(range(8))) for i in range(3)])
    X = space.sample(np.random.default_rng(0), 25)
    y = np.cos(X[:, 0] / 2) + 0.3 * X[:, 1] - 0.1 * X[:, 2] ** 2
    gp = fit_gp(X, y, KernelSpec("se", 0.4), 0.0, bounds=space.bounds, name="ipc")
    return space, gp, X, y


class TestBootstrapSample:
    def test_mean_only_at_training_points(self, model):
        space, gp, X, y = model
        _, ys = bootstrap_sample(gp, space, BootstrapConfig(noise_mode="mean", query_source="provided", queries=X))
        np.testing.assert_allclose(ys, y, atol=1e-8)

    def test_joint_at_training_point_equals_observation(self, model):
        space, gp, X, y = model
        m, v, _ = oracles.gp_posterior(X[:1].tolist(), [float(y[0])], X[:1].tolist(), "se", 0.4, None, 0.0,
                                       list(gp.lower), list(gp.upper))
        assert v[0] == pytest.approx(0.0, abs=1e-12)
        for seed in range(5):
            cfg = BootstrapConfig(noise_mode="joint", seed=seed, query_source="provided", queries=X[:1])
            _, ys = bootstrap_sample(gp, space, cfg)
            assert ys[0] == pytest.approx(y[0], abs=1e-6)

    def test_same_seed_identical(self, model):
        space, gp, _, _ = model
        a = bootstrap_sample(gp, space, BootstrapConfig(200, "joint", seed=4))
        b = bootstrap_sample(gp, space, BootstrapConfig(200, "joint", seed=4))
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])

    def test_different_seed_different_draws(self, model):
        space, gp, X, _ = model
        Q = space.sample(np.random.default_rng(9), 50)
        a = bootstrap_sample(gp, space, BootstrapConfig(noise_mode="joint", seed=1, query_source="provided", queries=Q))
        b = bootstrap_sample(gp, space, BootstrapConfig(noise_mode="joint", seed=2, query_source="provided", queries=Q))
        assert not np.array_equal(a[1], b[1])

    def test_mean_only_is_seed_independent(self, model):
        space, gp, _, _ = model
        Q = space.sample(np.random.default_rng(9), 50)
        a = bootstrap_sample(gp, space, BootstrapConfig(noise_mode="mean", seed=1, query_source="provided", queries=Q))
        b = bootstrap_sample(gp, space, BootstrapConfig(noise_mode="mean", seed=2, query_source="provided", queries=Q))
        np.testing.assert_array_equal(a[1], b[1])

    def test_uniform_queries_distinct_and_in_space(self, model):
        space, gp, _, _ = model
        X, y = bootstrap_sample(gp, space, BootstrapConfig(300, seed=0))
        keys = [space.key(x) for x in X]
        assert len(set(keys)) == 300 == len(y)

    def test_more_points_than_space(self):
        space = DesignSpace([Parameter("a", (0, 1, 2))])
        gp = fit_gp([[0.0], [2.0]], [1.0, 3.0], bounds=space.bounds)
        X, y = bootstrap_sample(gp, space, BootstrapConfig(10, seed=0))
        assert X.shape == (10, 1)
        assert set(X[:, 0]) <= {0.0, 1.0, 2.0}

    def test_dimension_mismatch(self, model):
        _, gp, _, _ = model
        with pytest.raises(ArgumentError):
            bootstrap_sample(gp, DesignSpace([Parameter("a", (0, 1))]), BootstrapConfig(5))

    def test_config_validation(self):
        with pytest.raises(ConfigurationError):
            BootstrapConfig(0)
        with pytest.raises(ConfigurationError):
            BootstrapConfig(query_source="provided")
        with pytest.raises(ValueError):
            BootstrapConfig(noise_mode="independent")
        assert BootstrapConfig(noise_mode="mean").noise_mode is NoiseMode.MEAN_ONLY


class TestPosteriorDraws:
    def test_moments_at_fixed_query(self, model):
        _, gp, _, _ = model
        q = np.array([[3.5, 6.0, 0.5]])
        mean, var = posterior(gp, q)
        draws = sample_posterior(gp, q, 2000, np.random.default_rng(0))[:, 0]
        sd = np.sqrt(var[0])
        assert var[0] > 1e-3
        assert abs(draws[:500].mean() - mean[0]) <= 3 * sd / np.sqrt(500)
        assert abs(draws.mean() - mean[0]) <= 3 * sd / np.sqrt(2000)
        assert draws.var() == pytest.approx(var[0], rel=0.2)

    def test_joint_draws_keep_correlation(self, model):
        space, _, _, _ = model
        gp = fit_gp([[0.0, 0.0, 0.0]], [1.0], KernelSpec("se", 0.4), bounds=space.bounds)
        q = np.array([[7.0, 7.0, 7.0], [7.0, 7.0, 6.0]])
        draws = sample_posterior(gp, q, 3000, np.random.default_rng(1))
        assert np.corrcoef(draws.T)[0, 1] > 0.8
