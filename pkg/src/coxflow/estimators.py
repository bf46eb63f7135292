"""scikit-learn style estimators wrapping the functional fitting API."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from ._validation import check_XT, terminal_arrays
from .drift import DriftModel, SolverConfig
from .forecast import ForecastQuery, ltsr_batch
from .optimize import FitConfig, fit_alasso, fit_mle, fit_two_step

__all__ = ["CoxFlowRegressor", "AdaptiveLassoCoxFlow", "TwoStepCoxFlow"]


class _CoxFlowBase(BaseEstimator):
    def _configs(self):
        cfg = FitConfig(
            max_outer_iters=self.max_iter,
            gradient_eps=self.gradient_eps,
            convergence_tol=self.tol,
            multistart_count=self.n_starts,
            seed=self.random_state if self.random_state is not None else 0,
            zero_threshold=getattr(self, "zero_threshold", 1e-4),
            lambda_override=getattr(self, "alpha", None),
            bandwidth=self.bandwidth,
            density=self.density,
        )
        return cfg, SolverConfig(self.n_steps)

    def _template(self, p):
        return DriftModel.zeros(self.family, p, self.temporal)

    def _store(self, res):
        self.result_ = res
        self.coef_ = res.b_hat
        self.drift_ = res.drift
        self.drift_params_ = res.a_hat
        self.hazard_ = res.hazard_hat
        self.loglik_ = res.loglik
        self.converged_ = res.converged
        self.n_iter_ = res.iterations
        self.n_features_in_ = res.p
        return self

    def predict(self, X):
        """Log relative risk ``X @ coef_``."""
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64)
        return X @ self.coef_

    def predict_survival(self, X, t_prime, t=0.0):
        """Probability of no event over ``[t, t + t_prime)`` for each row of ``X``
        observed at time ``t``."""
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64)
        t = np.broadcast_to(np.asarray(t, dtype=float), (X.shape[0],))
        tp = np.broadcast_to(np.asarray(t_prime, dtype=float), (X.shape[0],))
        queries = [ForecastQuery(X[i], t[i], tp[i]) for i in range(X.shape[0])]
        return ltsr_batch(self.result_, queries, SolverConfig(self.n_steps)).survival

    def cumulative_hazard(self, t):
        check_is_fitted(self, "hazard_")
        return self.hazard_.cumulative(t)


class CoxFlowRegressor(_CoxFlowBase):
    """Full-information Cox regression for covariates observed at the event time.

    Parameters
    ----------
    family : {"constant", "linear"}
        Drift family of the covariate path.
    temporal : sequence of int, optional
        Covariates that follow the drift; the others are constant in time.
    drift_params : array-like, optional
        Hold the drift at these values and estimate only the coefficients.
    n_steps : int
        Euler steps per reconstructed trajectory.
    density : {"loo", "full"}
        Leave-one-out or in-sample kernel estimate of the origin density.

    Attributes
    ----------
    coef_ : ndarray of shape (n_features,)
    drift_params_ : ndarray
    hazard_ : StepwiseHazard
    result_ : FitResult
    """

    def __init__(self, family="constant", temporal=None, drift_params=None, n_steps=64, max_iter=200,
                 tol=1e-6, gradient_eps=1e-5, n_starts=3, bandwidth=None, density="loo", random_state=None):
        self.family = family
        self.temporal = temporal
        self.drift_params = drift_params
        self.n_steps = n_steps
        self.max_iter = max_iter
        self.tol = tol
        self.gradient_eps = gradient_eps
        self.n_starts = n_starts
        self.bandwidth = bandwidth
        self.density = density
        self.random_state = random_state

    def fit(self, X, T):
        """Fit to covariates ``X`` observed at event times ``T``."""
        X, T = check_XT(X, T)
        cfg, solver = self._configs()
        res = fit_mle(terminal_arrays(X, T), self._template(X.shape[1]), cfg, solver, a_fixed=self.drift_params)
        return self._store(res)

    def score(self, X, T):
        """Mean profiled log-likelihood of ``(X, T)`` at the fitted parameters."""
        from .likelihood import ProfiledObjective

        check_is_fitted(self, "coef_")
        X, T = check_XT(X, T)
        obj = ProfiledObjective(terminal_arrays(X, T), self.drift_, SolverConfig(self.n_steps),
                                self.bandwidth, density=self.density)
        return obj(np.concatenate([self.drift_params_, self.coef_]))


class AdaptiveLassoCoxFlow(CoxFlowRegressor):
    """Adaptive-LASSO variant; ``alpha`` defaults to ``n ** -0.25``.

    Attributes
    ----------
    support_ : boolean ndarray
        Selected covariates.
    pilot_coef_ : ndarray
        Unpenalized estimate supplying the weights.
    """

    def __init__(self, family="constant", temporal=None, drift_params=None, alpha=None, zero_threshold=1e-4,
                 n_steps=64, max_iter=200, tol=1e-6, gradient_eps=1e-5, n_starts=3, bandwidth=None,
                 density="loo", random_state=None):
        super().__init__(family, temporal, drift_params, n_steps, max_iter, tol, gradient_eps, n_starts,
                         bandwidth, density, random_state)
        self.alpha = alpha
        self.zero_threshold = zero_threshold

    def fit(self, X, T):
        X, T = check_XT(X, T)
        cfg, solver = self._configs()
        arr = terminal_arrays(X, T)
        template = self._template(X.shape[1])
        res = fit_alasso(arr, template, cfg, solver, a_fixed=self.drift_params)
        self._store(res)
        self.support_ = res.selection_mask
        self.pilot_coef_ = res.pilot_b
        return self


class TwoStepCoxFlow(_CoxFlowBase):
    """Drift from panel trajectories by least squares, then coefficients by
    the conditional likelihood.  ``fit`` takes a list of
    :class:`~coxflow.records.PanelRecord`."""

    def __init__(self, family="constant", temporal=None, n_steps=64, max_iter=200, tol=1e-6,
                 gradient_eps=1e-5, random_state=None):
        self.family = family
        self.temporal = temporal
        self.n_steps = n_steps
        self.max_iter = max_iter
        self.tol = tol
        self.gradient_eps = gradient_eps
        self.random_state = random_state

    n_starts = 1
    bandwidth = None
    density = "loo"

    def fit(self, panel, y=None):
        panel = list(panel)
        cfg, solver = self._configs()
        p = panel[0].values.shape[1] if panel else 0
        return self._store(fit_two_step(panel, self._template(p), cfg, solver))
