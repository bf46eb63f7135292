"""Long-term survival rate: probability of no event over a forecast window."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .drift import DEFAULT_SOLVER, SolverConfig, forward_paths
from .exceptions import NonFiniteForecast
from .hazard import ExposurePlan

__all__ = ["ForecastQuery", "ForecastBatch", "ltsr", "ltsr_batch"]


@dataclass(frozen=True)
class ForecastQuery:
    """Covariate value ``z`` observed at time ``t``; window length ``t_prime``."""

    z: np.ndarray
    t: float
    t_prime: float

    def __post_init__(self):
        z = np.atleast_1d(np.asarray(self.z, dtype=float)).ravel()
        if not np.all(np.isfinite(z)):
            raise ValueError("z must be finite")
        if not (np.isfinite(self.t) and self.t >= 0):
            raise ValueError("t must be finite and non-negative")
        if not (np.isfinite(self.t_prime) and self.t_prime > 0):
            raise ValueError("t_prime must be finite and positive")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "t_prime", float(self.t_prime))


@dataclass(frozen=True)
class ForecastBatch:
    """Survival probabilities with a flag for windows reaching past the last
    hazard knot, where the last step height is carried forward."""

    survival: np.ndarray
    extrapolated: np.ndarray


def ltsr_batch(fit, queries, solver: SolverConfig = DEFAULT_SOLVER) -> ForecastBatch:
    """Survival over ``[t, t + t_prime)`` for each query.

    The covariate path is propagated forward from ``(z, t)`` by the fitted
    drift; the integral of ``exp(b' Z(tau)) * lambda(tau)`` is taken by the
    trapezoid rule on the solver grid merged with the hazard knots.
    """
    queries = list(queries)
    if not queries:
        return ForecastBatch(np.zeros(0), np.zeros(0, dtype=bool))
    model, b, hz = fit.drift, np.asarray(fit.b_hat, dtype=float), fit.hazard_hat
    Z = np.vstack([q.z for q in queries])
    if Z.shape[1] != model.p:
        raise ValueError(f"queries have {Z.shape[1]} covariates; the fit has p={model.p}")
    t = np.array([q.t for q in queries])
    tp = np.array([q.t_prime for q in queries])
    M = solver.steps_per_trajectory
    try:
        values, _ = forward_paths(model, Z, t, tp, solver)
    except FloatingPointError as exc:
        raise NonFiniteForecast(str(exc)) from exc
    eta = values @ b
    edges = np.append(hz.knots, np.inf)
    lo = np.clip(edges[None, :-1] - t[:, None], 0.0, tp[:, None])
    hi = np.clip(edges[None, 1:] - t[:, None], 0.0, tp[:, None])
    plan = ExposurePlan(tp / M, lo, hi, M)
    heights = np.append(hz.heights, hz.heights[-1])
    integral = plan.dense(plan.integrate(eta, NonFiniteForecast)) @ heights
    surv = np.exp(-integral)
    if not np.all(np.isfinite(surv)):
        raise NonFiniteForecast("survival integral is not finite")
    return ForecastBatch(np.clip(surv, 0.0, 1.0), t + tp > hz.last_knot)


def ltsr(fit, q: ForecastQuery, solver: SolverConfig = DEFAULT_SOLVER) -> float:
    """Estimated probability of no event in ``[q.t, q.t + q.t_prime)`` given ``Z(q.t) = q.z``.

    ``fit`` is anything exposing ``drift``, ``b_hat`` and ``hazard_hat``,
    normally a :class:`~coxflow.optimize.FitResult`.
    """
    return float(ltsr_batch(fit, [q], solver).survival[0])
