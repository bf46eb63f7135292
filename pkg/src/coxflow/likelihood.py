"""Full-information log-likelihood and its penalized / conditional variants."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._validation import TerminalArrays, terminal_arrays
from .density import KernelDensity, default_bandwidth, loo_log_density
from .drift import DEFAULT_SOLVER, DriftModel, SolverConfig, backward_logdet, backward_paths
from .exceptions import DivisionByZeroWeight, NonFiniteLikelihood
from .hazard import StepwiseHazard, calendar_exponent, exposure_matrix, step_plan
from .records import TerminalRecord

__all__ = [
    "TerminalRecord",
    "ParameterProfile",
    "LikelihoodValue",
    "full_loglik",
    "penalized_loglik",
    "conditional_loglik",
    "alasso_penalty",
    "default_lambda",
    "ProfiledObjective",
]

COMPONENTS = ("log_density", "log_jacobian", "log_hazard", "linear", "integral")


@dataclass(frozen=True)
class ParameterProfile:
    drift: DriftModel
    b: np.ndarray
    hazard: StepwiseHazard

    def __post_init__(self):
        b = np.array(self.b, dtype=float).ravel()
        if b.shape[0] != self.drift.p:
            raise ValueError(f"b has length {b.shape[0]}, drift has p={self.drift.p}")
        if not np.all(np.isfinite(b)):
            raise ValueError("b must be finite")
        object.__setattr__(self, "b", b)

    @property
    def a(self):
        return self.drift.a


@dataclass(frozen=True)
class LikelihoodValue:
    """Mean log-likelihood with its per-subject breakdown.

    ``per_subject`` and every entry of ``components`` follow the input order;
    ``integral`` enters with a minus sign.
    """

    total: float
    per_subject: np.ndarray = field(repr=False)
    components: dict = field(repr=False)


def default_lambda(n):
    return float(n) ** -0.25


def _unsort(values, order):
    out = np.empty_like(values)
    out[order] = values
    return out


def _components(profile: ParameterProfile, arr: TerminalArrays, cfg, bandwidth, with_density):
    model, b, hz = profile.drift, profile.b, profile.hazard
    values, _ = backward_paths(model, arr.Z, arr.times, cfg)
    comp = {}
    if with_density:
        h = default_bandwidth(arr.n) if bandwidth is None else bandwidth
        origins = values[:, -1]
        comp["log_density"] = KernelDensity(origins, h).log_pdf(origins)
        comp["log_jacobian"] = backward_logdet(model, values, arr.times, cfg)[:, -1]
    lam = hz.eval_left(arr.times)
    with np.errstate(divide="ignore"):
        comp["log_hazard"] = np.log(lam)
    comp["linear"] = arr.Z @ b
    W = exposure_matrix(calendar_exponent(values, b), arr.times, hz.knots)
    comp["integral"] = W @ np.append(hz.heights, hz.heights[-1])
    for name, v in comp.items():
        if not np.all(np.isfinite(v)):
            raise NonFiniteLikelihood(f"non-finite {name} component")
    return comp


def _assemble(comp, arr):
    per = _unsort(sum(v for k, v in comp.items() if k != "integral") - comp["integral"], arr.order)
    return LikelihoodValue(
        float(np.mean(per)),
        per,
        {k: _unsort(v, arr.order) for k, v in comp.items()},
    )


def full_loglik(
    profile: ParameterProfile, data, cfg: SolverConfig = DEFAULT_SOLVER, bandwidth=None
) -> LikelihoodValue:
    """Mean over subjects of the joint log-density of ``(Z_T, T)``.

    Each subject contributes the log kernel density of its back-propagated
    origin, the log-Jacobian of the back-propagation, the log-hazard at its
    event time, ``b' z`` and minus the integrated hazard along its path.
    """
    arr = terminal_arrays(data)
    if arr.n < 2:
        raise ValueError("full_loglik needs at least two subjects for the kernel density")
    return _assemble(_components(profile, arr, cfg, bandwidth, True), arr)


def conditional_loglik(profile: ParameterProfile, data, cfg: SolverConfig = DEFAULT_SOLVER) -> LikelihoodValue:
    """Mean log conditional density of ``T`` given the path; no density or Jacobian."""
    arr = terminal_arrays(data)
    return _assemble(_components(profile, arr, cfg, None, False), arr)


def alasso_penalty(b, b_pilot, lam):
    b_pilot = np.asarray(b_pilot, dtype=float)
    if np.any(np.abs(b_pilot) < 1e-12):
        raise DivisionByZeroWeight("pilot estimate has (near) zero coefficients")
    return float(lam * np.sum(np.abs(b) / b_pilot**2))


def penalized_loglik(
    profile: ParameterProfile, b_pilot, data, lam, cfg: SolverConfig = DEFAULT_SOLVER, bandwidth=None
) -> float:
    """``full_loglik - lam * sum_j |b_j| / b_pilot_j**2``."""
    if not lam > 0:
        raise ValueError("penalty level must be positive")
    pen = alasso_penalty(profile.b, b_pilot, lam)
    return full_loglik(profile, data, cfg, bandwidth).total - pen


class ProfiledObjective:
    """Log-likelihood as a function of ``(a, b)`` with the hazard profiled out.

    Parameters
    ----------
    data : sequence of TerminalRecord or TerminalArrays
    template : DriftModel
        Supplies the family, ``p`` and the temporal block; its ``a`` is ignored.
    with_density : bool
        ``False`` gives the conditional likelihood used by the two-step fit.
    """

    def __init__(self, data, template: DriftModel, cfg: SolverConfig = DEFAULT_SOLVER,
                 bandwidth=None, with_density=True, density="loo"):
        self.arr = terminal_arrays(data)
        if self.arr.n < 2:
            raise ValueError("need at least two subjects")
        self.template = template
        self.cfg = cfg
        self.with_density = with_density
        if density not in ("loo", "full"):
            raise ValueError("density must be 'loo' or 'full'")
        self.density = density
        self.bandwidth = default_bandwidth(self.arr.n) if bandwidth is None else bandwidth
        self.knots = np.concatenate([[0.0], self.arr.times])
        self.M = cfg.steps_per_trajectory
        self.plan = step_plan(self.arr.times, self.knots, self.M)
        self.n_evals = 0

    @property
    def d(self):
        return self.template.d

    @property
    def p(self):
        return self.template.p

    def split(self, params):
        params = np.asarray(params, dtype=float)
        return params[: self.d], params[self.d:]

    def _paths(self, a, b):
        """Exponent on calendar nodes and back-propagated origins."""
        arr = self.arr
        model = self.template.with_params(a)
        if model.state_free:
            rate = model.q(np.zeros(self.p))
            frac = 1.0 - np.arange(self.M + 1) / self.M
            eta = (arr.Z @ b)[:, None] - float(b @ rate) * arr.times[:, None] * frac[None, :]
            return model, None, eta, arr.Z - arr.times[:, None] * rate
        values, _ = backward_paths(model, arr.Z, arr.times, self.cfg)
        return model, values, calendar_exponent(values, b), values[:, -1]

    def _exposures(self, eta):
        n = self.arr.n
        vals = self.plan.integrate(eta)
        denom = np.bincount(self.plan.cols, vals, minlength=n + 1)[:n]
        if np.any(denom <= 0):
            raise NonFiniteLikelihood("degenerate risk-set exposure while profiling the hazard")
        theta = 1.0 / denom
        integral = np.bincount(self.plan.rows, vals * np.append(theta, theta[-1])[self.plan.cols], minlength=n)
        return theta, integral

    def hazard(self, a, b):
        _, _, eta, _ = self._paths(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
        theta, _ = self._exposures(eta)
        return StepwiseHazard(self.knots, theta)

    def per_subject(self, a, b):
        """Per-subject contributions in sorted order, hazard profiled."""
        arr = self.arr
        model, values, eta, origins = self._paths(a, b)
        theta, integral = self._exposures(eta)
        per = np.log(theta) + arr.Z @ b - integral
        if self.with_density:
            if self.density == "full":
                per = per + KernelDensity(origins, self.bandwidth).log_pdf(origins)
            else:
                per = per + loo_log_density(origins, self.bandwidth)
            if model.family != "constant":
                per = per + backward_logdet(model, values, arr.times, self.cfg)[:, -1]
        if not np.all(np.isfinite(per)):
            raise NonFiniteLikelihood("non-finite profiled log-likelihood")
        return per

    def __call__(self, params):
        self.n_evals += 1
        a, b = self.split(params)
        return float(np.mean(self.per_subject(a, b)))
