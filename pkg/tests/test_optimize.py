import dataclasses
import warnings

import numpy as np
import pytest

from coxflow.drift import DriftModel
from coxflow.exceptions import DivisionByZeroWeight, InsufficientPanel, NoConvergence
from coxflow.hazard import profile_thetas
from coxflow.likelihood import ProfiledObjective
from coxflow.optimize import (
    FitConfig,
    bfgs_maximize,
    central_gradient,
    fit_alasso,
    fit_drift_panel,
    fit_mle,
    fit_two_step,
    soft_threshold,
)
from coxflow.records import PanelRecord
from coxflow.simulate import SimDesign, simulate_panel, simulate_terminal

from conftest import records

ONE_START = FitConfig(multistart_count=1)


def design(n, b0, a, seed=0, **kw):
    a = np.asarray(a, dtype=float)
    return SimDesign(n=n, drift=DriftModel("constant", a, a.shape[0]), b0=b0, seed=seed, baseline="constant", **kw)


@pytest.fixture(scope="module")
def medium():
    d = design(150, [1.5, -1.2, 0.0], [0.5, 0.3, -0.2], seed=11)
    return d, simulate_terminal(d)


class TestPrimitives:
    def test_central_gradient(self):
        f = lambda x: np.sin(x[0]) * x[1] ** 2
        x = np.array([0.3, 250.0])
        g = central_gradient(f, x, 1e-5)
        np.testing.assert_allclose(g, [np.cos(0.3) * 250.0**2, 2 * np.sin(0.3) * 250.0], rtol=1e-6)

    def test_bfgs_on_concave_quadratic(self):
        Q = np.array([[2.0, 0.3], [0.3, 0.5]])
        c = np.array([1.0, -2.0])
        tr = bfgs_maximize(lambda x: -(x - c) @ Q @ (x - c), np.zeros(2))
        assert tr.converged
        np.testing.assert_allclose(tr.x, c, atol=1e-6)
        assert np.all(np.diff(tr.history) >= 0)

    def test_bfgs_shrinks_through_nonfinite_region(self):
        f = lambda x: -np.inf if x[0] > 1.95 else -(x[0] - 1.9) ** 2 - x[1] ** 2
        tr = bfgs_maximize(f, np.array([-3.0, 1.0]), max_step=50.0)
        np.testing.assert_allclose(tr.x, [1.9, 0.0], atol=1e-5)
        assert np.all(np.diff(tr.history) >= 0)

    def test_soft_threshold(self):
        np.testing.assert_array_equal(soft_threshold(np.array([-2.0, 0.3, 1.0]), 0.5), [-1.5, 0.0, 0.5])

    def test_config_validation(self):
        with pytest.raises(ValueError):
            FitConfig(zero_threshold=0.1)
        with pytest.raises(ValueError):
            FitConfig(multistart_count=0)
        with pytest.raises(ValueError):
            FitConfig(density="other")


class TestMLE:
    Z = [[0.5], [-0.2], [1.0], [0.1], [-0.7]]
    T = [1.5, 0.6, 0.9, 0.3, 1.1]

    def test_toy_matches_grid_argmax(self):
        data = records(self.Z, self.T)
        a = np.array([0.3])
        obj = ProfiledObjective(data, DriftModel("constant", a, 1))
        phi = lambda b: obj(np.concatenate([a, [b]]))
        grid = np.arange(-4.0, 4.0, 1e-3)
        vals = np.array([phi(b) for b in grid])
        assert np.all(np.diff(vals, 2) <= 1e-12)
        k = int(np.argmax(vals))
        fine = np.linspace(grid[k - 1], grid[k + 1], 2001)
        b_grid = fine[np.argmax([phi(b) for b in fine])]
        fit = fit_mle(data, "constant", ONE_START, a_fixed=a)
        assert abs(fit.b_hat[0] - b_grid) <= 1e-3
        assert fit.converged

    def test_restricted_fit_invariants(self, medium):
        d, data = medium
        fit = fit_mle(data, "constant", ONE_START, a_fixed=d.drift.a)
        np.testing.assert_array_equal(fit.a_hat, d.drift.a)
        hz = profile_thetas(fit.drift, fit.b_hat, data)
        np.testing.assert_allclose(fit.hazard_hat.heights, hz.heights, rtol=1e-12)
        obj = ProfiledObjective(data, fit.drift)
        f = lambda b: obj(np.concatenate([fit.a_hat, b]))
        assert abs(f(fit.b_hat) - fit.loglik) <= 1e-12
        g = central_gradient(f, fit.b_hat)
        assert np.max(np.abs(g) / np.maximum(1, np.abs(fit.b_hat))) <= 1e-3
        assert np.all(np.diff(fit.history) >= 0)

    def test_joint_fit_is_stationary(self):
        d = design(120, [1.0], [0.5], seed=5)
        data = simulate_terminal(d)
        fit = fit_mle(data, "constant", ONE_START)
        obj = ProfiledObjective(data, fit.drift)
        x = np.concatenate([fit.a_hat, fit.b_hat])
        g = central_gradient(obj, x)
        assert fit.converged
        assert np.max(np.abs(g) / np.maximum(1, np.abs(x))) <= 1e-3
        assert np.all(np.diff(fit.history) >= 0)

    def test_determinism(self, medium):
        d, data = medium
        f1 = fit_mle(data, "constant", FitConfig(multistart_count=2, seed=3), a_fixed=d.drift.a)
        f2 = fit_mle(data, "constant", FitConfig(multistart_count=2, seed=3), a_fixed=d.drift.a)
        assert np.array_equal(f1.b_hat, f2.b_hat) and f1.loglik == f2.loglik
        assert np.array_equal(f1.hazard_hat.heights, f2.hazard_hat.heights)

    def test_no_convergence_warns_and_returns(self, medium):
        d, data = medium
        with pytest.warns(NoConvergence):
            fit = fit_mle(data, "constant", FitConfig(multistart_count=1, max_outer_iters=1), a_fixed=d.drift.a)
        assert not fit.converged and np.all(np.isfinite(fit.b_hat))

    def test_zero_signal(self):
        est = []
        for seed in range(20):
            d = design(200, [0.0, 0.0], [0.4, -0.3], seed=100 + seed)
            est.append(fit_mle(simulate_terminal(d), "constant", ONE_START, a_fixed=d.drift.a).b_hat)
        est = np.array(est)
        se = est.std(axis=0, ddof=1)
        assert np.mean(np.abs(est) <= 2.5 * se) >= 0.95


class TestALASSO:
    def test_vanishing_penalty_recovers_mle(self, medium):
        d, data = medium
        mle = fit_mle(data, "constant", ONE_START, a_fixed=d.drift.a)
        al = fit_alasso(data, "constant", FitConfig(multistart_count=1, lambda_override=1e-10), pilot=mle,
                        a_fixed=d.drift.a)
        assert np.max(np.abs(al.b_hat - mle.b_hat)) <= 1e-3

    def test_selection(self, medium):
        d, data = medium
        al = fit_alasso(data, "constant", ONE_START, a_fixed=d.drift.a)
        np.testing.assert_array_equal(al.selection_mask, np.abs(al.b_hat) > ONE_START.zero_threshold)
        np.testing.assert_array_equal(al.selection_mask, [True, True, False])
        assert al.b_hat[2] == 0.0
        assert al.penalty_level == pytest.approx(150 ** -0.25)
        assert np.all(np.diff(al.history) >= -1e-12)

    def test_zero_pilot_rejected(self, medium):
        d, data = medium
        mle = fit_mle(data, "constant", ONE_START, a_fixed=d.drift.a)
        bad = dataclasses.replace(mle, b_hat=np.array([0.0, 1.0, 1.0]))
        with pytest.raises(DivisionByZeroWeight):
            fit_alasso(data, "constant", ONE_START, pilot=bad, a_fixed=d.drift.a)


class TestTwoStep:
    def test_two_point_slope(self):
        panel = [PanelRecord("a", [0.0, 1.0], [[0.0], [1.0]])]
        drift, conv = fit_drift_panel(panel)
        assert conv and abs(drift.a[0] - 1.0) <= 1e-6

    def test_step1_least_squares_oracle(self, rng):
        panel = []
        for i in range(30):
            times = np.sort(rng.uniform(0.1, 3.0, rng.integers(2, 5)))
            panel.append(PanelRecord(str(i), times, rng.standard_normal((times.size, 2))))
        num, den = np.zeros(2), 0.0
        for r in panel:
            dt = r.times[-1] - r.times
            num += (dt[:, None] * (r.values[-1] - r.values)).sum(axis=0) / r.m
            den += (dt**2).sum() / r.m
        drift, _ = fit_drift_panel(panel)
        np.testing.assert_allclose(drift.a, num / den, atol=1e-6)

    def test_insufficient_panel(self):
        panel = [PanelRecord("a", [1.0], [[0.0]]), PanelRecord("b", [0.5, 1.0], [[0.0], [1.0]])]
        with pytest.raises(InsufficientPanel):
            fit_two_step(panel)

    def test_step2_equals_restricted_mle(self):
        d = design(150, [0.8, -0.6], [0.5, 0.3], seed=21)
        panel = simulate_panel(d)
        ts = fit_two_step(panel, "constant", ONE_START, a_fixed=d.drift.a)
        mle = fit_mle([r.terminal() for r in panel], "constant", ONE_START, a_fixed=d.drift.a)
        assert np.max(np.abs(ts.b_hat - mle.b_hat)) <= 1e-3

    def test_noise_free_constant_panel_recovers_drift(self):
        d = design(60, [0.8, -0.6], [0.5, 0.3], seed=4)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NoConvergence)
            fit = fit_two_step(simulate_panel(d), "constant", ONE_START)
        np.testing.assert_allclose(fit.a_hat, d.drift.a, atol=1e-8)
