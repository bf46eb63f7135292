"""Stepwise baseline hazard and its profiled heights.

Heights ``theta[k]`` apply on ``[knots[k], knots[k+1])``; past the last knot
the last height carries forward.  In the likelihood, the hazard "at" an event
time ``t_i`` is the height of the step that ends at ``t_i`` (the left limit),
which makes the profiled heights the exact stationary point of the
log-likelihood in ``theta``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._validation import terminal_arrays
from .drift import DEFAULT_SOLVER, DriftModel, SolverConfig, backward_paths
from .exceptions import NonFiniteLikelihood

__all__ = [
    "StepwiseHazard",
    "hazard_eval",
    "cumulative",
    "profile_thetas",
    "ExposurePlan",
    "exposure",
    "step_plan",
    "exposure_matrix",
    "calendar_exponent",
]

EXP_CLAMP = 700.0


@dataclass(frozen=True)
class StepwiseHazard:
    """Piecewise-constant hazard.

    Parameters
    ----------
    knots : array of shape (K + 1,)
        ``0 = knots[0] < knots[1] < ... < knots[K]``.
    heights : array of shape (K,)
        Non-negative step heights.
    """

    knots: np.ndarray = field(repr=False)
    heights: np.ndarray = field(repr=False)

    def __post_init__(self):
        knots = np.array(self.knots, dtype=float).ravel()
        heights = np.array(self.heights, dtype=float).ravel()
        if knots.shape[0] != heights.shape[0] + 1 or heights.shape[0] < 1:
            raise ValueError("need len(knots) == len(heights) + 1 >= 2")
        if knots[0] != 0.0 or np.any(np.diff(knots) <= 0):
            raise ValueError("knots must start at 0 and be strictly increasing")
        if not (np.all(np.isfinite(heights)) and np.all(heights >= 0)):
            raise ValueError("heights must be finite and non-negative")
        knots.setflags(write=False)
        heights.setflags(write=False)
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "heights", heights)

    @classmethod
    def constant(cls, value=1.0, end=1.0):
        return cls([0.0, end], [value])

    @property
    def n_steps(self):
        return self.heights.shape[0]

    @property
    def last_knot(self):
        return float(self.knots[-1])

    def _index(self, t, side):
        i = np.searchsorted(self.knots, t, side=side) - 1
        return np.clip(i, 0, self.n_steps - 1)

    def eval(self, t):
        """Right-continuous value ``lambda(t)``."""
        t = np.asarray(t, dtype=float)
        out = self.heights[self._index(t, "right")]
        return float(out) if out.ndim == 0 else out

    def eval_left(self, t):
        """Left limit ``lambda(t-)``; equals ``heights[0]`` at ``t = 0``."""
        t = np.asarray(t, dtype=float)
        out = self.heights[self._index(t, "left")]
        return float(out) if out.ndim == 0 else out

    def cumulative(self, t):
        """Exact ``int_0^t lambda(u) du``."""
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValueError("t must be non-negative")
        at_knots = np.concatenate([[0.0], np.cumsum(self.heights * np.diff(self.knots))])
        i = self._index(t, "right")
        out = at_knots[i] + self.heights[i] * (t - self.knots[i])
        return float(out) if out.ndim == 0 else out


def hazard_eval(h: StepwiseHazard, t):
    return h.eval(t)


def cumulative(h: StepwiseHazard, t):
    return h.cumulative(t)


class ExposurePlan:
    """Precomputed quadrature layout for :func:`exposure`.

    Row ``i`` carries a piecewise-linear exponent known at the uniform nodes
    ``u = m * step[i]``, ``m = 0..M``.  Each interval ``[lo, hi]`` is
    integrated by the trapezoid rule on its own merged grid: the interval
    endpoints plus every node strictly inside.  Only intervals with
    ``hi > lo`` are stored; the layout depends on the grid and the interval
    endpoints, not on the exponent, so it is reused across evaluations.
    """

    def __init__(self, step, lo, hi, M):
        step = np.asarray(step, dtype=float)
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        self.shape = lo.shape
        self.M = M
        rows, cols = np.nonzero(hi > lo)
        self.rows, self.cols = rows, cols
        lo, hi, st = lo[rows, cols], hi[rows, cols], step[rows]
        base = rows * (M + 1)
        self.m_lo, self.fr_lo = self._locate(lo, st, M)
        self.m_hi, self.fr_hi = self._locate(hi, st, M)
        self.i_lo = base + self.m_lo
        self.i_hi = base + self.m_hi
        self.single = self.m_hi <= self.m_lo
        self.len_single = hi - lo
        self.len_first = (self.m_lo + 1) * st - lo
        self.len_last = hi - self.m_hi * st
        self.step = step

    @staticmethod
    def _locate(u, step, M):
        x = u / step
        m = np.clip(np.floor(x).astype(np.intp), 0, M - 1)
        return m, x - m

    def integrate(self, eta, error=NonFiniteLikelihood):
        """Sparse integrals, aligned with ``(self.rows, self.cols)``."""
        top = np.max(eta)
        if not top <= EXP_CLAMP:
            raise error(f"exp exponent {top:.1f} exceeds {EXP_CLAMP}")
        E = np.exp(eta)
        cell = 0.5 * self.step[:, None] * (E[:, :-1] + E[:, 1:])
        C = np.zeros_like(E)
        np.cumsum(cell, axis=1, out=C[:, 1:])
        ef, Ef, Cf = eta.ravel(), E.ravel(), C.ravel()
        e_lo = ef[self.i_lo]
        e_hi = ef[self.i_hi]
        f_lo = np.exp(e_lo + self.fr_lo * (ef[self.i_lo + 1] - e_lo))
        f_hi = np.exp(e_hi + self.fr_hi * (ef[self.i_hi + 1] - e_hi))
        first = 0.5 * self.len_first * (f_lo + Ef[self.i_lo + 1])
        middle = Cf[self.i_hi] - Cf[self.i_lo + 1]
        last = 0.5 * self.len_last * (Ef[self.i_hi] + f_hi)
        return np.where(self.single, 0.5 * self.len_single * (f_lo + f_hi), first + middle + last)

    def dense(self, values):
        out = np.zeros(self.shape)
        out[self.rows, self.cols] = values
        return out


def exposure(eta, step, lo, hi, error=NonFiniteLikelihood):
    """Trapezoid integrals of ``exp(eta)`` over ``[lo, hi]`` for each row.

    See :class:`ExposurePlan`; returns a dense ``(n, K)`` array.
    """
    plan = ExposurePlan(step, lo, hi, eta.shape[1] - 1)
    return plan.dense(plan.integrate(eta, error))


def calendar_exponent(values, b):
    """``b' Z_i(u)`` on ascending calendar nodes from backward path values."""
    return values[:, ::-1, :] @ np.asarray(b, dtype=float)


def exposure_matrix(eta, horizons, knots, error=NonFiniteLikelihood):
    """Per-step exposures ``W[i, k] = int exp(eta_i(u)) du`` over step ``k``.

    Step ``k < K`` is ``[knots[k], knots[k+1])`` clipped at the subject's
    horizon; the extra last column is the extension beyond ``knots[K]``.
    """
    plan = step_plan(horizons, knots, eta.shape[1] - 1)
    return plan.dense(plan.integrate(eta, error))


def step_plan(horizons, knots, M):
    """:class:`ExposurePlan` for the hazard steps (plus extension) of each subject."""
    horizons = np.asarray(horizons, dtype=float)
    edges = np.append(knots, np.inf)
    lo = np.minimum(edges[None, :-1], horizons[:, None])
    hi = np.minimum(edges[None, 1:], horizons[:, None])
    return ExposurePlan(horizons / M, lo, hi, M)


def _profile_from_exposure(W):
    # column k is the step ending at the k-th event; earlier subjects have zero exposure there
    denom = W[:, : W.shape[0]].sum(axis=0)
    if np.any(denom <= 0) or not np.all(np.isfinite(denom)):
        raise NonFiniteLikelihood("degenerate risk-set exposure while profiling the hazard")
    return 1.0 / denom


def profile_thetas(
    model: DriftModel, b, data, cfg: SolverConfig = DEFAULT_SOLVER
) -> StepwiseHazard:
    """Heights solving the first-order conditions of the log-likelihood.

    ``theta[i] = 1 / sum_{j >= i} int_{t_{i-1}}^{t_i} exp(b' Z_j(u)) du``,
    with the knots at the sorted event times.
    """
    arr = terminal_arrays(data)
    if arr.n < 2:
        raise ValueError("profiling needs at least two subjects")
    values, _ = backward_paths(model, arr.Z, arr.times, cfg)
    knots = np.concatenate([[0.0], arr.times])
    W = exposure_matrix(calendar_exponent(values, b), arr.times, knots)
    return StepwiseHazard(knots, _profile_from_exposure(W))
