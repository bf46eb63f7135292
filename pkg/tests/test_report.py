import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from coxflow.drift import DriftModel
from coxflow.hazard import StepwiseHazard
from coxflow.optimize import FitConfig, FitResult
from coxflow.report import hazard_curve, replication_seeds, run_study, selection_metrics, worker_count
from coxflow.simulate import ConstantBaseline, DecayingBaseline, SimDesign

CFG = FitConfig(multistart_count=1)


def small_design(**kw):
    base = dict(n=80, drift=DriftModel("constant", [0.5, -0.3, 0.2], 3), b0=[1.0, 0.0, -0.8],
                baseline="constant", seed=3)
    base.update(kw)
    return SimDesign(**base)


@given(arrays(bool, st.tuples(st.integers(1, 12), st.just(6))), arrays(bool, 6))
@settings(max_examples=100, deadline=None)
def test_selection_metrics_against_one_liners(masks, support):
    m = selection_metrics(masks, support)
    rows = [list(r) for r in masks]
    s = list(support)
    assert m.C == np.mean([sum((not x) and (not y) for x, y in zip(r, s)) for r in rows])
    assert m.IC == np.mean([sum((not x) and y for x, y in zip(r, s)) for r in rows])
    assert m.u_fit == np.mean([any(y and not x for x, y in zip(r, s)) for r in rows])
    assert m.c_fit == np.mean([r == s for r in rows])
    assert m.o_fit == np.mean([all(x or not y for x, y in zip(r, s)) and r != s for r in rows])
    assert m.u_fit + m.c_fit + m.o_fit <= 1 + 1e-12
    assert 0 <= m.C <= (~support).sum() and 0 <= m.IC <= support.sum()


def test_identical_seeds_give_zero_std():
    res = run_study(small_design(), 2, "mle", CFG, seeds=[7, 7])
    assert np.all(res.std == 0.0)
    assert res.failures == [] and res.n_converged == 2


def test_reordering_invariance():
    res = run_study(small_design(), 4, "mle", CFG)
    shuffled = dataclasses.replace(res, fits=res.fits[::-1])
    np.testing.assert_allclose(shuffled.bias, res.bias, rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(shuffled.std, res.std, rtol=1e-12)


def test_study_is_deterministic_and_uses_derived_seeds():
    a = run_study(small_design(), 3, "alasso", CFG)
    b = run_study(small_design(), 3, "alasso", CFG)
    assert a.seeds == replication_seeds(3, 3)
    assert np.array_equal(a.estimates, b.estimates)
    assert a.summary() == b.summary()
    assert a.masks.shape == (3, 3)


def test_failures_are_recorded_not_raised():
    d = small_design(baseline=ConstantBaseline(1e-6), t_max=1.0, max_redraws=1)
    res = run_study(d, 3, "mle", CFG)
    assert len(res.failures) == 3 and all("HazardTooFlat" in msg for _, msg in res.failures)
    assert res.estimates.shape == (0, 3)
    assert res.summary()["failures"] == 3


def test_twostep_and_estimated_drift():
    ts = run_study(small_design(), 2, "twostep", CFG, obs_noise=0.05)
    assert not ts.drift_known and ts.drift_estimates.shape == (2, 3)
    est = run_study(small_design(), 2, "mle", CFG, drift_known=False)
    assert "drift_bias" in est.summary()
    with pytest.raises(ValueError):
        run_study(small_design(), 2, "bayes")
    with pytest.raises(ValueError):
        run_study(small_design(), 1)


def test_bias_table_lists_true_nonzeros():
    res = run_study(small_design(), 2, "mle", CFG)
    rows = res.bias_table()
    assert [r[0] for r in rows] == [1, 3] and [r[1] for r in rows] == [1.0, -0.8]


def test_hazard_curve():
    f = FitResult(DriftModel("constant", [0.0], 1), np.zeros(1), StepwiseHazard.constant(1.0, end=4.0), 0.0, True, 0)
    tab = hazard_curve(f, truth=DecayingBaseline(), n_points=9)
    assert tab.shape == (9, 3) and tab[0, 1] == 0.0
    np.testing.assert_allclose(tab[:, 1], tab[:, 0], atol=1e-15)
    np.testing.assert_allclose(tab[:, 2], DecayingBaseline().cumulative(tab[:, 0]))
    assert hazard_curve(f, grid=[0.5, 1.0]).shape == (2, 2)


def test_worker_count(monkeypatch):
    monkeypatch.setenv("COXFLOW_THREADS", "1")
    assert worker_count() == 1
    assert worker_count(0) == 1
    monkeypatch.delenv("COXFLOW_THREADS")
    assert worker_count() >= 1
