import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from coxflow import AdaptiveLassoCoxFlow, CoxFlowRegressor, TwoStepCoxFlow
from coxflow.drift import DriftModel
from coxflow.optimize import FitConfig, fit_mle
from coxflow.simulate import SimDesign, simulate_panel, simulate_terminal

A0 = np.array([0.5, -0.3, 0.2])


@pytest.fixture(scope="module")
def data():
    d = SimDesign(n=150, drift=DriftModel("constant", A0, 3), b0=[1.5, -1.2, 0.0], baseline="constant", seed=2)
    recs = simulate_terminal(d)
    X = np.vstack([r.z_at_event for r in recs])
    T = np.array([r.event_time for r in recs])
    return d, recs, X, T


def test_params_and_clone():
    est = CoxFlowRegressor(n_starts=1, density="full")
    assert est.get_params()["density"] == "full"
    c = clone(est).set_params(max_iter=10)
    assert c.max_iter == 10 and est.max_iter == 200
    assert "alpha" in AdaptiveLassoCoxFlow().get_params()


def test_not_fitted():
    with pytest.raises(NotFittedError):
        CoxFlowRegressor().predict(np.zeros((1, 2)))


def test_regressor_matches_functional_api(data):
    d, recs, X, T = data
    est = CoxFlowRegressor(drift_params=A0, n_starts=1).fit(X, T)
    ref = fit_mle(recs, "constant", FitConfig(multistart_count=1), a_fixed=A0)
    assert np.array_equal(est.coef_, ref.b_hat)
    assert est.n_features_in_ == 3 and est.converged_
    np.testing.assert_allclose(est.predict(X[:4]), X[:4] @ est.coef_)
    assert est.score(X, T) == pytest.approx(ref.loglik, abs=1e-12)
    s = est.predict_survival(X[:5], [0.1, 0.5, 1.0, 2.0, 3.0])
    assert np.all((s >= 0) & (s <= 1))
    assert est.cumulative_hazard(0.0) == 0.0


def test_adaptive_lasso(data):
    _, _, X, T = data
    est = AdaptiveLassoCoxFlow(drift_params=A0, n_starts=1).fit(X, T)
    np.testing.assert_array_equal(est.support_, [True, True, False])
    assert est.pilot_coef_.shape == (3,) and est.coef_[2] == 0.0


def test_two_step(data):
    d = data[0]
    est = TwoStepCoxFlow().fit(simulate_panel(d, obs_noise=0.05))
    assert np.max(np.abs(est.drift_params_ - A0)) <= 0.05
    assert est.coef_.shape == (3,)


def test_input_validation():
    with pytest.raises(ValueError):
        CoxFlowRegressor().fit(np.zeros((3, 1)), [1.0, -1.0, 2.0])
    with pytest.raises(ValueError):
        CoxFlowRegressor().fit(np.zeros((3, 1)), [1.0, 2.0])
