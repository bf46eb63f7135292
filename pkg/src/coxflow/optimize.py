"""Fitting drivers: profiled MLE, adaptive LASSO and the two-step panel fit."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._validation import check_panel, terminal_arrays
from .drift import DEFAULT_SOLVER, DriftModel, SolverConfig, backward_paths
from .exceptions import DivisionByZeroWeight, NoConvergence, NonFiniteLikelihood
from .hazard import StepwiseHazard
from .likelihood import ProfiledObjective, default_lambda
from .records import PanelRecord

__all__ = [
    "FitConfig",
    "FitResult",
    "PanelRecord",
    "bfgs_maximize",
    "central_gradient",
    "initial_drift",
    "fit_mle",
    "fit_alasso",
    "fit_two_step",
    "fit_drift_panel",
    "trajectory_distance",
]

@dataclass(frozen=True)
class FitConfig:
    max_outer_iters: int = 200
    gradient_eps: float = 1e-5
    convergence_tol: float = 1e-6
    multistart_count: int = 3
    seed: int = 0
    zero_threshold: float = 1e-4
    lambda_override: Optional[float] = None
    bandwidth: Optional[float] = None
    gtol: float = 1e-5
    density: str = "loo"

    def __post_init__(self):
        for name in ("max_outer_iters", "gradient_eps", "convergence_tol", "multistart_count", "gtol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.zero_threshold < 1e-2:
            raise ValueError("zero_threshold must lie in (0, 1e-2)")
        if self.lambda_override is not None and not self.lambda_override > 0:
            raise ValueError("lambda_override must be positive")
        if self.density not in ("loo", "full"):
            raise ValueError("density must be 'loo' or 'full'")


@dataclass
class FitResult:
    drift: DriftModel
    b_hat: np.ndarray
    hazard_hat: StepwiseHazard
    loglik: float
    converged: bool
    iterations: int
    method: str = "mle"
    selection_mask: Optional[np.ndarray] = None
    pilot_b: Optional[np.ndarray] = None
    penalty_level: Optional[float] = None
    history: list = field(default_factory=list, repr=False)

    @property
    def a_hat(self):
        return self.drift.a

    @property
    def p(self):
        return self.b_hat.shape[0]


def central_gradient(f, x, eps=1e-5):
    """Central differences with step ``eps * max(1, |x_i|)``."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.shape[0]):
        h = eps * max(1.0, abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2.0 * h)
    return g


def _safe(f):
    def wrapped(x):
        try:
            v = f(x)
        except (NonFiniteLikelihood, FloatingPointError):
            return -np.inf
        return v if np.isfinite(v) else -np.inf

    return wrapped


@dataclass
class _Trace:
    x: np.ndarray
    f: float
    converged: bool
    iterations: int
    history: list


def bfgs_maximize(f, x0, eps=1e-5, max_iter=200, xtol=1e-6, gtol=1e-5, max_step=2.0, grad=None):
    """Maximize ``f`` by BFGS with Armijo backtracking.

    Non-finite trial values (overflowing paths) shrink the step like a
    failed Armijo test.  Every accepted step increases ``f``.
    """
    f = _safe(f)
    grad = grad or (lambda x: central_gradient(f, x, eps))
    x = np.array(x0, dtype=float)
    fx = f(x)
    if not np.isfinite(fx):
        raise NonFiniteLikelihood("objective is not finite at the starting point")
    n = x.shape[0]
    g = -grad(x)
    H = np.eye(n)
    history = [fx]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        if not np.all(np.isfinite(g)):
            break
        if np.max(np.abs(g)) <= gtol:
            converged = True
            it -= 1
            break
        d = -H @ g
        slope = g @ d
        if slope >= 0:
            H = np.eye(n)
            d = -g
            slope = g @ d
        scale = max_step / max(np.max(np.abs(d)), max_step)
        d *= scale
        slope *= scale
        t = 1.0
        for _ in range(50):
            x_new = x + t * d
            f_new = f(x_new)
            if np.isfinite(f_new) and -f_new <= -fx + 1e-4 * t * slope:
                break
            t *= 0.5
        else:
            # no ascent possible along d; treat as converged at noise level
            converged = np.max(np.abs(g)) <= 1e3 * gtol
            break
        s = x_new - x
        g_new = -grad(x_new)
        y = g_new - g
        x, fx, g = x_new, f_new, g_new
        history.append(fx)
        sy = s @ y
        if sy > 1e-12 * np.sqrt((s @ s) * (y @ y)):
            if it == 1:
                H = np.eye(n) * (sy / (y @ y))
            rho = 1.0 / sy
            Hy = H @ y
            H = H + rho * ((1.0 + rho * (y @ Hy)) * np.outer(s, s) - np.outer(Hy, s) - np.outer(s, Hy))
        if np.max(np.abs(s)) <= xtol * (1.0 + np.max(np.abs(x))):
            converged = True
            break
    return _Trace(x, fx, converged, it, history)


def _template(family, p, temporal=None):
    if isinstance(family, DriftModel):
        return family
    return DriftModel.zeros(family, p, temporal)


def initial_drift(template: DriftModel, Z, T):
    """Heuristic starting drift: the ratio of grand means ``sum z / sum T``.

    Only the state-independent part of the drift is set; all other
    parameters start at zero.
    """
    k = template.k
    slope = np.sum(Z[:, list(template.temporal)], axis=0) / np.sum(T)
    a = np.zeros(template.d)
    a[:k] = slope
    return template.with_params(a)


def _starts(x0, count, seed, scale=0.1):
    rng = np.random.default_rng(seed)
    out = [np.array(x0, dtype=float)]
    for _ in range(count - 1):
        out.append(x0 + scale * rng.standard_normal(x0.shape[0]))
    return out


def _finish(obj, template, x, fval, trace_conv, iters, history, method, **extra):
    a, b = obj.split(x)
    return FitResult(
        drift=template.with_params(a),
        b_hat=np.array(b),
        hazard_hat=obj.hazard(a, b),
        loglik=float(fval),
        converged=bool(trace_conv),
        iterations=int(iters),
        method=method,
        history=list(history),
        **extra,
    )


class _Objective:
    """Profiled log-likelihood as ``f(a, b)``, with an optional fixed drift.

    With the drift held fixed the density and Jacobian terms do not depend
    on ``b``; they are computed once and added to the cheaper conditional
    likelihood, so the value still equals the full-information one.
    """

    def __init__(self, arr, template, solver, cfg, a_fixed=None):
        self.full = ProfiledObjective(arr, template, solver, cfg.bandwidth, density=cfg.density)
        self.a_fixed = None if a_fixed is None else np.asarray(a_fixed, dtype=float).ravel()
        self.offset = 0.0
        if self.a_fixed is not None:
            if self.a_fixed.shape[0] != template.d:
                raise ValueError(f"a_fixed has length {self.a_fixed.shape[0]}, the drift needs {template.d}")
            self.cond = ProfiledObjective(arr, template, solver, with_density=False)
            x = np.concatenate([self.a_fixed, np.zeros(template.p)])
            self.offset = self.full(x) - self.cond(x)

    def __call__(self, a, b):
        if self.a_fixed is None:
            return self.full(np.concatenate([a, b]))
        return self.cond(np.concatenate([self.a_fixed, b])) + self.offset


def fit_mle(data, family="constant", cfg: FitConfig = FitConfig(), solver: SolverConfig = DEFAULT_SOLVER,
            temporal=None, x0=None, a_fixed=None) -> FitResult:
    """Maximize the profiled full-information log-likelihood.

    Runs BFGS from ``cfg.multistart_count`` starts (the heuristic start
    first, then seeded perturbations of it) and keeps the best.

    Parameters
    ----------
    a_fixed : array-like, optional
        Hold the drift at these values and maximize over ``b`` only.
    x0 : array-like, optional
        Starting point ``(a, b)``; with ``a_fixed`` only ``b``.
    """
    arr = terminal_arrays(data)
    if arr.n < 2:
        raise ValueError("fit_mle needs at least two subjects")
    template = _template(family, arr.p, temporal)
    obj = _Objective(arr, template, solver, cfg, a_fixed)
    if a_fixed is None:
        f = lambda x: obj(x[: template.d], x[template.d:])
        if x0 is None:
            x0 = np.concatenate([initial_drift(template, arr.Z, arr.times).a, np.zeros(arr.p)])
    else:
        f = lambda x: obj(None, x)
        if x0 is None:
            x0 = np.zeros(arr.p)
    best = None
    for start in _starts(np.asarray(x0, dtype=float), cfg.multistart_count, cfg.seed):
        try:
            tr = bfgs_maximize(f, start, cfg.gradient_eps, cfg.max_outer_iters, cfg.convergence_tol, cfg.gtol)
        except NonFiniteLikelihood:
            continue
        if best is None or tr.f > best.f:
            best = tr
    if best is None:
        raise NonFiniteLikelihood("likelihood not finite at any starting point")
    if not best.converged:
        warnings.warn(f"fit_mle stopped after {best.iterations} iterations", NoConvergence)
    x = best.x if a_fixed is None else np.concatenate([obj.a_fixed, best.x])
    return _finish(obj.full, template, x, best.f, best.converged, best.iterations, best.history, "mle")


def soft_threshold(x, width):
    return np.sign(x) * np.maximum(np.abs(x) - width, 0.0)


def _prox_ascent_b(smooth, a, b, weights, lam, eps, max_iter, tol, step=1.0):
    """Proximal gradient ascent in ``b`` for ``smooth(a, b) - lam * sum(w |b|)``.

    Barzilai-Borwein initial steps, halved until the quadratic minorant
    holds, so every accepted step increases the penalized objective.
    """
    fb = lambda v: smooth(a, v)
    f = fb(b)
    g = central_gradient(fb, b, eps)
    it = 0
    for it in range(1, max_iter + 1):
        for _ in range(60):
            b_new = soft_threshold(b + step * g, step * lam * weights)
            diff = b_new - b
            f_new = fb(b_new)
            if np.isfinite(f_new) and f_new >= f + g @ diff - (diff @ diff) / (2.0 * step):
                break
            step *= 0.5
        else:
            return b, f, it
        g_new = central_gradient(fb, b_new, eps)
        yy = g - g_new
        sy = diff @ yy
        step = (diff @ diff) / sy if sy > 1e-16 else 2.0 * step
        step = float(np.clip(step, 1e-6, 1e3))
        b, f, g = b_new, f_new, g_new
        if np.max(np.abs(diff)) <= tol * (1.0 + np.max(np.abs(b))):
            break
    return b, f, it


def fit_alasso(data, family="constant", cfg: FitConfig = FitConfig(), solver: SolverConfig = DEFAULT_SOLVER,
               temporal=None, pilot: Optional[FitResult] = None, a_fixed=None) -> FitResult:
    """Adaptive-LASSO fit with weights ``1 / b_pilot**2``.

    Alternates a BFGS pass over the drift parameters with proximal-gradient
    sweeps over ``b``; the hazard is re-profiled at every evaluation.
    Coefficients below ``cfg.zero_threshold`` are set to exactly zero.
    The pilot defaults to :func:`fit_mle` with the same ``a_fixed``.
    """
    arr = terminal_arrays(data)
    template = _template(family, arr.p, temporal)
    if pilot is None:
        pilot = fit_mle(arr, template, cfg, solver, a_fixed=a_fixed)
    b_pilot = np.asarray(pilot.b_hat, dtype=float)
    if np.any(np.abs(b_pilot) < 1e-12):
        raise DivisionByZeroWeight("pilot estimate has (near) zero coefficients")
    weights = 1.0 / b_pilot**2
    lam = cfg.lambda_override if cfg.lambda_override is not None else default_lambda(arr.n)
    obj = _Objective(arr, template, solver, cfg, a_fixed)
    split_eval = _safe(lambda ab: obj(ab[: template.d], ab[template.d:]))
    smooth = lambda a_, b_: split_eval(np.concatenate([a_, b_]))

    a = np.array(pilot.a_hat if a_fixed is None else obj.a_fixed, dtype=float)
    b = b_pilot.copy()
    penalized = lambda a_, b_: smooth(a_, b_) - lam * np.sum(weights * np.abs(b_))
    history = [penalized(a, b)]
    converged = False
    it = 0
    for it in range(1, cfg.max_outer_iters + 1):
        a_old, b_old = a, b
        if a_fixed is None:
            a = bfgs_maximize(lambda v: smooth(v, b), a, cfg.gradient_eps, 5, cfg.convergence_tol, cfg.gtol).x
        b, _, _ = _prox_ascent_b(smooth, a, b, weights, lam, cfg.gradient_eps, 50, cfg.convergence_tol)
        history.append(penalized(a, b))
        change = max(np.max(np.abs(a - a_old), initial=0.0), np.max(np.abs(b - b_old)))
        if change <= cfg.convergence_tol * (1.0 + np.max(np.abs(np.concatenate([a, b])))):
            converged = True
            break
    b = np.where(np.abs(b) < cfg.zero_threshold, 0.0, b)
    if not converged:
        warnings.warn(f"fit_alasso stopped after {it} outer iterations", NoConvergence)
    return _finish(obj.full, template, np.concatenate([a, b]), smooth(a, b), converged, it, history, "alasso",
                   selection_mask=np.abs(b) > cfg.zero_threshold, pilot_b=b_pilot, penalty_level=lam)


def trajectory_distance(model: DriftModel, panel, solver: SolverConfig = DEFAULT_SOLVER):
    """Mean over subjects of the mean squared gap between observations and
    the drift path through each subject's last observation."""
    total = 0.0
    for Zend, Tend, obs_t, obs_z, m in _panel_blocks(panel):
        vals, _ = backward_paths(model, Zend, Tend, solver, duration=Tend - obs_t)
        total += np.sum(np.sum((vals[:, -1] - obs_z) ** 2, axis=1) / m)
    return total / len(panel)


def _panel_blocks(panel):
    # one batch per subject group; all observations of subject i share its end point
    ends = np.vstack([r.values[-1] for r in panel])
    Tend = np.array([r.times[-1] for r in panel])
    m = np.array([r.m for r in panel], dtype=float)
    idx = np.concatenate([np.full(r.m, i) for i, r in enumerate(panel)])
    obs_t = np.concatenate([r.times for r in panel])
    obs_z = np.vstack([r.values for r in panel])
    yield ends[idx], Tend[idx], obs_t, obs_z, m[idx]


def fit_drift_panel(panel, family="constant", cfg: FitConfig = FitConfig(), solver: SolverConfig = DEFAULT_SOLVER,
                    temporal=None):
    """Step 1 of the two-step fit: drift parameters minimizing
    :func:`trajectory_distance`, started from pooled panel slopes.

    Returns ``(DriftModel, converged)``.
    """
    panel = check_panel(panel)
    template = _template(family, panel[0].values.shape[1], temporal)
    x0 = _panel_slope_start(template, panel)
    tr = bfgs_maximize(lambda a: -trajectory_distance(template.with_params(a), panel, solver), x0,
                       cfg.gradient_eps, cfg.max_outer_iters, cfg.convergence_tol, cfg.gtol * 1e-2)
    return template.with_params(tr.x), tr.converged


def fit_two_step(panel, family="constant", cfg: FitConfig = FitConfig(), solver: SolverConfig = DEFAULT_SOLVER,
                 temporal=None, a_fixed=None) -> FitResult:
    """Drift by trajectory least squares, then ``b`` by conditional likelihood.

    Step 1 is :func:`fit_drift_panel`; step 2 maximizes the profiled
    conditional log-likelihood in ``b`` with the drift held fixed.
    ``a_fixed`` skips step 1.
    """
    panel = check_panel(panel)
    p = panel[0].values.shape[1]
    template = _template(family, p, temporal)
    arr = terminal_arrays([r.terminal() for r in panel])
    if a_fixed is None:
        drift, conv1 = fit_drift_panel(panel, template, cfg, solver)
        a_hat = drift.a
    else:
        a_hat, conv1 = np.asarray(a_fixed, dtype=float), True
    obj = ProfiledObjective(arr, template, solver, with_density=False)
    tr2 = bfgs_maximize(lambda b: obj(np.concatenate([a_hat, b])), np.zeros(p), cfg.gradient_eps,
                        cfg.max_outer_iters, cfg.convergence_tol, cfg.gtol)
    converged = tr2.converged and conv1
    if not converged:
        warnings.warn("fit_two_step did not converge", NoConvergence)
    return _finish(obj, template, np.concatenate([a_hat, tr2.x]), tr2.f, converged, tr2.iterations,
                   tr2.history, "two_step")


def _panel_slope_start(template: DriftModel, panel):
    first = np.vstack([r.values[0] for r in panel])
    last = np.vstack([r.values[-1] for r in panel])
    dt = np.array([r.times[-1] - r.times[0] for r in panel])
    a = np.zeros(template.d)
    k = template.k
    a[:k] = (np.sum(last - first, axis=0) / np.sum(dt))[list(template.temporal)]
    return a
