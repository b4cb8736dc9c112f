"""Transfer-learning blend, lambda schedule and task correlation."""

from pathlib import Path

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from statdse.active import ObjectiveSpec, RunConfig, propose_candidates, run_active_learning
from statdse.errors import ArgumentError, ConfigurationError, UndefinedCorrelationError
from statdse.evaluators import make_synthetic_evaluator
from statdse.gp import KernelSpec, fit_gp, load_gp, posterior, save_gp
from statdse.space import DesignSpace, Parameter
from statdse.transfer import TransferConfig, combine_posterior, lambda_schedule, task_correlation

FIXTURES = Path(__file__).parent / "fixtures"


def _pair(seed=0):
    rng = np.random.default_rng(seed)
    bounds = ([0, 0], [10, 10])
    Xt = rng.integers(0, 11, (6, 2)).astype(float)
    Xs = rng.integers(0, 11, (9, 2)).astype(float)
    target = fit_gp(np.unique(Xt, axis=0), rng.normal(size=len(np.unique(Xt, axis=0))), KernelSpec("se", 0.4),
                    1e-4, bounds=bounds)
    Xs = np.unique(Xs, axis=0)
    source = fit_gp(Xs, 5 + rng.normal(size=len(Xs)), KernelSpec("matern", 0.5, 2.5), 1e-4, bounds=bounds)
    return target, source


class TestCombinePosterior:
    def test_zero_weights_identity(self):
        t, s = _pair()
        Q = np.random.default_rng(1).random((10, 2)) * 10
        m, v = combine_posterior(t, s, 0.0, 0.0, Q)
        mt, vt = posterior(t, Q)
        np.testing.assert_allclose(m, mt, atol=1e-12, rtol=0)
        np.testing.assert_allclose(v, vt, atol=1e-12, rtol=0)

    def test_source_equal_to_target_doubles_mean(self):
        t, _ = _pair()
        Q = np.random.default_rng(2).random((10, 2)) * 10
        m, v = combine_posterior(t, t, 1.0, 0.0, Q)
        mt, vt = posterior(t, Q)
        np.testing.assert_allclose(m, 2 * mt, atol=1e-12)
        np.testing.assert_allclose(v, vt, atol=1e-12)

    def test_fixture_models_against_dense_oracle(self):
        source = load_gp(FIXTURES / "fixture_model.gp")
        rng = np.random.default_rng(3)
        Xt = np.unique(rng.integers(0, 11, (5, 2)).astype(float), axis=0)
        yt = rng.normal(size=len(Xt))
        target = fit_gp(Xt, yt, KernelSpec("se", 0.5), 1e-4, bounds=([0, 0], [10, 10]))
        Q = [[1.0, 2.0], [5.0, 5.0], [8.0, 9.0]]

        def dense(gp, X, y):
            return oracles.gp_posterior(X, y, Q, gp.kernel.family, gp.kernel.length_scale, gp.kernel.nu,
                                        gp.noise_variance + gp.jitter, list(gp.lower), list(gp.upper))

        mt, vt, _ = dense(target, Xt.tolist(), yt.tolist())
        ms, vs, _ = dense(source, source.X_raw.tolist(), source.y_raw.tolist())
        m, v = combine_posterior(target, source, 0.5, 0.25, Q)
        np.testing.assert_allclose(m, np.array(mt) + 0.5 * np.array(ms), atol=1e-8)
        np.testing.assert_allclose(v, np.array(vt) + 0.25 * np.array(vs), atol=1e-8)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0, 1), st.floats(0, 1), st.integers(0, 100))
    def test_linear_in_lambda1(self, a, b, seed):
        t, s = _pair(seed)
        Q = np.random.default_rng(seed).random((5, 2)) * 10
        mt, _ = posterior(t, Q)
        ma, _ = combine_posterior(t, s, a, 0.0, Q)
        mb, _ = combine_posterior(t, s, b, 0.0, Q)
        mab, _ = combine_posterior(t, s, a + b, 0.0, Q)
        np.testing.assert_allclose(ma + mb - mt, mab, atol=1e-10)

    def test_dimension_mismatch(self):
        t, _ = _pair()
        other = fit_gp([[0.0, 0.0, 0.0]], [1.0])
        with pytest.raises(ConfigurationError):
            combine_posterior(t, other, 0.5, 0.0, [[0.0, 0.0]])

    def test_negative_weight(self):
        t, s = _pair()
        with pytest.raises(ConfigurationError):
            combine_posterior(t, s, -0.1, 0.0, [[0.0, 0.0]])


class TestLambdaSchedule:
    def test_starts_at_initial(self):
        assert lambda_schedule(0, 50, 0.5) == 0.5

    def test_ends_at_zero(self):
        assert lambda_schedule(50, 50, 0.5) == 0.0

    def test_midpoint(self):
        assert lambda_schedule(25, 50, 0.5) == 0.25

    @given(st.integers(1, 200), st.floats(0.01, 1.0))
    def test_strictly_decreasing(self, total, lam):
        vals = [lambda_schedule(i, total, lam) for i in range(total + 1)]
        assert all(b < a for a, b in zip(vals, vals[1:]))

    def test_out_of_range(self):
        with pytest.raises(ArgumentError):
            lambda_schedule(6, 5, 0.5)
        with pytest.raises(ArgumentError):
            lambda_schedule(0, 0, 0.5)

    def test_config_validation(self):
        with pytest.raises(ConfigurationError):
            TransferConfig("m.gp", lambda1_initial=1.5)
        with pytest.raises(ConfigurationError):
            TransferConfig("m.gp", decay="exponential")


def _t_two_sided_p(rho, n):
    """Two-sided Student-t p-value via the regularized incomplete beta function."""
    with mpmath.workdps(30):
        df = n - 2
        t2 = mpmath.mpf(rho) ** 2 * df / (1 - mpmath.mpf(rho) ** 2)
        return float(mpmath.betainc(df / 2, mpmath.mpf(1) / 2, 0, df / (df + t2), regularized=True))


class TestTaskCorrelation:
    def test_identical(self):
        rho, p = task_correlation([1, 2, 3, 5], [1, 2, 3, 5])
        assert rho == pytest.approx(1.0, abs=1e-15)
        assert p == pytest.approx(0.0, abs=1e-12)

    def test_negated(self):
        rho, _ = task_correlation([1, 2, 3, 5], [-1, -2, -3, -5])
        assert rho == pytest.approx(-1.0, abs=1e-15)

    def test_hand_computed_pearson(self):
        a, b = [1, 2, 3, 4], [1.1, 1.9, 3.2, 3.8]
        rho, p = task_correlation(a, b)
        assert rho == pytest.approx(oracles.pearson(a, b), abs=1e-10)
        assert p == pytest.approx(_t_two_sided_p(rho, 4), rel=1e-8)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(3, 40), st.integers(0, 2**32 - 1))
    def test_p_value_oracle(self, n, seed):
        rng = np.random.default_rng(seed)
        a = rng.normal(size=n)
        b = 0.5 * a + rng.normal(size=n)
        rho, p = task_correlation(a, b)
        assert rho == pytest.approx(oracles.pearson(a.tolist(), b.tolist()), abs=1e-10)
        assert p == pytest.approx(_t_two_sided_p(rho, n), rel=1e-6, abs=1e-14)

    def test_zero_variance(self):
        with pytest.raises(UndefinedCorrelationError):
            task_correlation([1, 1, 1], [1, 2, 3])

    def test_too_short(self):
        with pytest.raises(ArgumentError):
            task_correlation([1, 2], [2, 1])


class TestTransferInLoop:
    @pytest.fixture
    def setup(self, tmp_path):
        space = DesignSpace([Parameter(f"x{i}", tuple(range(1, 8))) for i in range(3)])
        ev = make_synthetic_evaluator("correlated_pair", space, seed=1)
        rng = np.random.default_rng(0)
        X = space.sample(rng, 60)
        source = fit_gp(X, ev.query_batch(X)[:, 0], bounds=space.bounds, name="source")
        path = tmp_path / "source.gp"
        save_gp(source, path)
        return space, ev, path

    def _run(self, ev, transfer):
        cfg = RunConfig((ObjectiveSpec("target", "maximize"),), n_init=4, max_iterations=10, patience=100,
                        seed=5, transfer=transfer)
        return run_active_learning(cfg, ev)[1]

    def test_zero_lambda_runs_identical(self, setup):
        _, ev, path = setup
        plain = self._run(ev, None).evaluated()
        zero = self._run(ev, TransferConfig(path, 0.0, 0.0)).evaluated()
        np.testing.assert_array_equal(plain[0], zero[0])
        np.testing.assert_array_equal(plain[1], zero[1])

    def test_transfer_changes_proposals(self, setup):
        _, ev, path = setup
        plain = self._run(ev, None).evaluated()
        tl = self._run(ev, TransferConfig(path, 0.5)).evaluated()
        assert not np.array_equal(plain[0], tl[0])

    def test_vanished_lambda_proposals_match(self, setup):
        space, ev, path = setup
        source = load_gp(path)
        X = space.sample(np.random.default_rng(3), 15)
        gp = fit_gp(X, ev.query_batch(X)[:, 1], bounds=space.bounds)
        visited = {space.key(x) for x in X}
        lam = lambda_schedule(10, 10, 0.5)
        a = propose_candidates([gp], space, 5, 200, visited=visited, seed=9)
        b = propose_candidates([gp], space, 5, 200, visited=visited, seed=9, transfer={0: (source, lam, lam)})
        np.testing.assert_array_equal(a, b)

    def test_dimension_mismatch_rejected(self, setup, tmp_path):
        _, ev, _ = setup
        bad = tmp_path / "bad.gp"
        save_gp(fit_gp([[0.0, 1.0]], [1.0]), bad)
        with pytest.raises(ConfigurationError):
            self._run(ev, TransferConfig(bad))
