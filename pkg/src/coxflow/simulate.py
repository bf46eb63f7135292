"""Synthetic data from the joint covariate-path / proportional-hazards model.

Each subject draws an origin ``Z0 ~ N(0, I)``, follows the deterministic
drift path ``Z(s)`` forward from time zero and fails at the first point of a
Poisson process with intensity ``lambda0(s) * exp(b0' Z(s))``.

Two independent samplers are provided: inverse transform of the cumulative
intensity (the primary one) and Lewis-Shedler thinning (used as an oracle).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .drift import DriftModel
from .exceptions import HazardTooFlat
from .hazard import StepwiseHazard
from .records import PanelRecord, TerminalRecord

__all__ = [
    "DecayingBaseline",
    "ConstantBaseline",
    "StepBaseline",
    "SimDesign",
    "sparse16_design",
    "simulate_terminal",
    "simulate_panel",
    "simulate_thinning_oracle",
    "fraction_schedule",
]

logger = logging.getLogger(__name__)

# ---------------------------------------------------------------------------
# baseline hazards


@dataclass(frozen=True)
class DecayingBaseline:
    """``lambda0(t) = (e^10 + e^-t) / (e^10 + 1)``, decreasing from 1 towards ``e^10 / (e^10 + 1)``."""

    name = "decaying"

    def rate(self, t):
        t = np.asarray(t, dtype=float)
        return (1.0 + np.exp(-10.0 - t)) / (1.0 + math.exp(-10.0))

    def cumulative(self, t):
        t = np.asarray(t, dtype=float)
        return (t + math.exp(-10.0) * (1.0 - np.exp(-t))) / (1.0 + math.exp(-10.0))

    def sup(self, lo, hi):
        return self.rate(lo)


@dataclass(frozen=True)
class ConstantBaseline:
    """``lambda0(t) = value``."""

    value: float = 1.0
    name = "constant"

    def __post_init__(self):
        if not self.value > 0:
            raise ValueError("constant baseline must be positive")

    def rate(self, t):
        return np.full(np.shape(t), self.value)

    def cumulative(self, t):
        return self.value * np.asarray(t, dtype=float)

    def sup(self, lo, hi):
        return np.full(np.shape(lo), self.value)


@dataclass(frozen=True)
class StepBaseline:
    """A user-supplied :class:`StepwiseHazard` used as the true baseline."""

    hazard: StepwiseHazard
    name = "step"

    def rate(self, t):
        return np.asarray(self.hazard.eval(t))

    def cumulative(self, t):
        return np.asarray(self.hazard.cumulative(t))

    def sup(self, lo, hi):
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        h = self.hazard
        i = h._index(lo, "right")
        j = h._index(hi, "right")
        return np.array([h.heights[a:b + 1].max() for a, b in zip(i, j)])


_BASELINES = {"decaying": DecayingBaseline, "constant": ConstantBaseline, "one": ConstantBaseline}


def _baseline(base):
    if isinstance(base, (DecayingBaseline, ConstantBaseline, StepBaseline)):
        return base
    if isinstance(base, StepwiseHazard):
        return StepBaseline(base)
    if isinstance(base, str) and base.lower() in _BASELINES:
        return _BASELINES[base.lower()]()
    raise ValueError(f"unknown baseline {base!r}")


# ---------------------------------------------------------------------------
# design


@dataclass(frozen=True)
class SimDesign:
    """Simulation design.

    Parameters
    ----------
    n : int
        Number of subjects.
    drift : DriftModel
        True drift; its ``p`` sets the covariate dimension.
    b0 : array of shape (p,)
        True regression coefficients.
    baseline : {"decaying", "constant"}, StepwiseHazard or baseline object
    seed : int
    t_max : float
        Subjects whose event time would exceed ``t_max`` are redrawn.
    max_redraws : int
        Total redraw budget per subject.
    step : float
        Base quadrature step of the inverse-transform sampler.
    z0 : array of shape (p,), optional
        Common starting point for every subject instead of ``N(0, I)`` draws.
    """

    n: int
    drift: DriftModel
    b0: np.ndarray
    baseline: object = "decaying"
    seed: int = 0
    t_max: float = 100.0
    max_redraws: int = 100
    step: float = 1e-2
    z0: Optional[np.ndarray] = None

    def __post_init__(self):
        if int(self.n) < 1:
            raise ValueError("n must be >= 1")
        if not self.t_max > 0:
            raise ValueError("t_max must be positive")
        if not self.step > 0:
            raise ValueError("step must be positive")
        b0 = np.array(self.b0, dtype=float).ravel()
        if b0.shape[0] != self.drift.p:
            raise ValueError(f"b0 has length {b0.shape[0]} but the drift has p={self.drift.p}")
        b0.setflags(write=False)
        object.__setattr__(self, "b0", b0)
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "baseline", _baseline(self.baseline))
        if self.z0 is not None:
            z0 = np.array(self.z0, dtype=float).ravel()
            if z0.shape[0] != self.drift.p or not np.all(np.isfinite(z0)):
                raise ValueError("z0 must be a finite vector of length p")
            z0.setflags(write=False)
            object.__setattr__(self, "z0", z0)

    @property
    def p(self):
        return self.drift.p

    def with_(self, **changes):
        return replace(self, **changes)


SPARSE16_A = np.array([1.0, 0.5, -1.0, 0.3] * 4)
SPARSE16_B = np.array([1.0, 1.0, -1.0] + [0.0] * 13)


def sparse16_design(n=400, seed=0, baseline="decaying", **kw) -> SimDesign:
    """Sixteen covariates, constant drift ``(1, 0.5, -1, 0.3)`` repeated four
    times, ``b0 = (1, 1, -1, 0, ..., 0)``."""
    drift = DriftModel("constant", SPARSE16_A, 16)
    return SimDesign(n=n, drift=drift, b0=SPARSE16_B, baseline=baseline, seed=seed, **kw)


# ---------------------------------------------------------------------------
# paths


class _PathFlow:
    """Forward drift flow started at time zero, evaluated at arbitrary times.

    State-free families are integrated exactly; other families use classical
    fourth-order Runge-Kutta on a fixed grid of width ``step``.
    """

    def __init__(self, model: DriftModel, step: float):
        self.model = model
        self.step = step

    def rk4(self, z, t, h):
        q = self.model.q
        h = np.asarray(h, dtype=float)[..., None] if np.ndim(h) else h
        t = np.asarray(t, dtype=float)[..., None] if np.ndim(t) else t
        k1 = q(z, t)
        k2 = q(z + 0.5 * h * k1, t + 0.5 * h)
        k3 = q(z + 0.5 * h * k2, t + 0.5 * h)
        k4 = q(z + h * k3, t + h)
        return z + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)

    def at(self, Z0, t):
        """``Z(t)`` for each row of ``Z0`` (``t`` broadcast per row)."""
        Z0 = np.atleast_2d(Z0)
        t = np.broadcast_to(np.asarray(t, dtype=float), (Z0.shape[0],))
        if self.model.state_free:
            return Z0 + t[:, None] * self.model.q(Z0)
        k = np.floor(t / self.step)
        z = Z0.copy()
        for j in range(int(k.max(initial=0))):
            live = j < k
            z[live] = self.rk4(z[live], j * self.step, self.step)
        rem = t - k * self.step
        return self.rk4(z, k * self.step, rem)


# ---------------------------------------------------------------------------
# inverse transform


def _subject_streams(seed, n, key=0):
    ss = np.random.SeedSequence([int(seed), int(key)])
    return [np.random.default_rng(s) for s in ss.spawn(n)]


def _cell_integral(flow, base, b0, z_lo, s_lo, width):
    """Simpson rule for ``int lambda0 exp(b0' Z)`` over ``[s_lo, s_lo + width]``.

    Equal to Richardson-extrapolated trapezoid sums at one and two panels.
    """
    if flow.model.state_free:
        rate = flow.model.q(z_lo)
        z_mid = z_lo + 0.5 * width[:, None] * rate
        z_hi = z_lo + width[:, None] * rate
    else:
        z_mid = flow.rk4(z_lo, s_lo, 0.5 * width)
        z_hi = flow.rk4(z_lo, s_lo, width)
    f0 = base.rate(s_lo) * np.exp(z_lo @ b0)
    f1 = base.rate(s_lo + 0.5 * width) * np.exp(z_mid @ b0)
    f2 = base.rate(s_lo + width) * np.exp(z_hi @ b0)
    return width / 6.0 * (f0 + 4.0 * f1 + f2), z_hi


def _invert(design: SimDesign, Z0, E):
    """Event times solving ``Lambda(T) = E``; ``inf`` where ``T > t_max``."""
    n = Z0.shape[0]
    flow = _PathFlow(design.drift, design.step)
    base, b0, h = design.baseline, design.b0, design.step
    T = np.full(n, np.inf)
    live = np.arange(n)
    z = Z0.copy()
    cum = np.zeros(n)
    s = 0.0
    n_cells = int(math.ceil(design.t_max / h))
    for _ in range(n_cells):
        width = np.full(live.shape[0], min(h, design.t_max - s))
        inc, z_next = _cell_integral(flow, base, b0, z[live], s, width)
        crossed = cum[live] + inc >= E[live]
        if np.any(crossed):
            idx = live[crossed]
            T[idx] = _bisect_cell(flow, base, b0, z[idx], s, width[crossed], E[idx] - cum[idx])
        cum[live] += inc
        z[live] = z_next
        live = live[~crossed]
        s += h
        if live.size == 0 or s >= design.t_max:
            break
    return T


def _bisect_cell(flow, base, b0, z_lo, s_lo, width, target, iters=60):
    lo = np.zeros_like(width)
    hi = width.copy()
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        val, _ = _cell_integral(flow, base, b0, z_lo, s_lo, mid)
        below = val < target
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return s_lo + 0.5 * (lo + hi)


def _origin(design, rng):
    return rng.standard_normal(design.p) if design.z0 is None else design.z0


def _draw(design: SimDesign, sampler):
    streams = _subject_streams(design.seed, design.n)
    p = design.p
    Z0 = np.empty((design.n, p))
    E = np.empty(design.n)
    for i, g in enumerate(streams):
        Z0[i] = _origin(design, g)
        E[i] = g.exponential()
    T = sampler(design, Z0, E, streams)
    counts = np.zeros(design.n, dtype=int)
    pending = np.flatnonzero(~np.isfinite(T))
    while pending.size:
        exhausted = pending[counts[pending] >= design.max_redraws]
        if exhausted.size:
            raise HazardTooFlat(
                f"{exhausted.size} subjects still exceed t_max={design.t_max} "
                f"after {design.max_redraws} redraws each"
            )
        for i in pending:
            Z0[i] = _origin(design, streams[i])
            E[i] = streams[i].exponential()
        counts[pending] += 1
        T[pending] = sampler(design, Z0[pending], E[pending], [streams[i] for i in pending])
        pending = pending[~np.isfinite(T[pending])]
    redraws = int(counts.sum())
    if redraws:
        logger.info("redrew %d subjects whose event time exceeded t_max=%g", redraws, design.t_max)
    return Z0, T, redraws


def _terminal_records(design, Z0, T):
    flow = _PathFlow(design.drift, design.step)
    ZT = flow.at(Z0, T)
    return [TerminalRecord(str(i), T[i], ZT[i]) for i in range(design.n)]


def simulate_terminal(design: SimDesign) -> list:
    """Terminal records ``(Z(T), T)`` by inverse transform of the cumulative intensity.

    The cumulative intensity is accumulated cell by cell on a grid of width
    ``design.step`` (Simpson, i.e. trapezoid with one Richardson refinement);
    the crossing cell is resolved by bisection.
    """
    Z0, T, _ = _draw(design, lambda d, Z, E, _s: _invert(d, Z, E))
    return _terminal_records(design, Z0, T)


# ---------------------------------------------------------------------------
# thinning oracle


def _thin_one(design, z0, rng, window=0.25):
    """Lewis-Shedler thinning for a single subject (state-free drift)."""
    b0, base = design.b0, design.baseline
    kappa = float(b0 @ design.drift.q(z0))
    c = float(b0 @ z0)
    t = 0.0
    while t < design.t_max:
        hi = min(t + window, design.t_max)
        bound = float(np.max(base.sup(np.array([t]), np.array([hi])))) * math.exp(c + max(kappa * t, kappa * hi))
        while True:
            t += rng.exponential() / bound
            if t >= hi:
                t = hi
                break
            accept = float(base.rate(np.array([t]))[0]) * math.exp(c + kappa * t) / bound
            if rng.uniform() <= accept:
                return t
    return math.inf


def _thinning_sampler(design, Z0, E, streams):
    # E is drawn for stream alignment with the inverse-transform sampler but unused here
    return np.array([_thin_one(design, Z0[i], streams[i]) for i in range(Z0.shape[0])])


def simulate_thinning_oracle(design: SimDesign) -> list:
    """Terminal records drawn by thinning a dominating Poisson process.

    The dominating rate is constant on windows of width 0.25 and equals the
    supremum of the baseline times the larger endpoint value of
    ``exp(b0' Z(s))``, which bounds the intensity when the exponent is
    linear in time.  Only state-free (constant) drifts qualify.
    """
    if not design.drift.state_free:
        raise ValueError("the thinning oracle needs a state-free drift for its intensity bound")
    Z0, T, _ = _draw(design, _thinning_sampler)
    return _terminal_records(design, Z0, T)


# ---------------------------------------------------------------------------
# panels


def fraction_schedule(fractions=(1.0 / 3.0, 2.0 / 3.0, 1.0)):
    """Observation times at fixed fractions of each subject's event time."""
    fr = np.asarray(fractions, dtype=float)
    if fr.ndim != 1 or fr.size < 2 or fr[-1] != 1.0 or np.any(np.diff(fr) <= 0) or fr[0] <= 0:
        raise ValueError("fractions must be increasing, positive, and end at 1")
    return lambda T: fr * T


def simulate_panel(design: SimDesign, schedule: Union[Callable, Sequence[float], None] = None,
                   obs_noise: float = 0.0) -> list:
    """Panel records along the same paths as :func:`simulate_terminal`.

    ``schedule`` maps an event time to increasing observation times ending
    at it (default ``T/3, 2T/3, T``); a sequence is read as fractions of
    ``T``.  ``obs_noise`` adds independent Gaussian measurement error with
    that standard deviation to every observation except the last, so the
    final row always equals the terminal record.
    """
    if schedule is None:
        schedule = fraction_schedule()
    elif not callable(schedule):
        schedule = fraction_schedule(schedule)
    if obs_noise < 0:
        raise ValueError("obs_noise must be non-negative")
    Z0, T, _ = _draw(design, lambda d, Z, E, _s: _invert(d, Z, E))
    flow = _PathFlow(design.drift, design.step)
    noise = _subject_streams(design.seed, design.n, key=1)
    out = []
    for i in range(design.n):
        times = np.asarray(schedule(T[i]), dtype=float)
        if times.size < 2 or not np.isclose(times[-1], T[i], rtol=0, atol=0):
            raise ValueError("schedule must give at least two times ending at the event time")
        values = flow.at(np.repeat(Z0[i][None, :], times.size, axis=0), times)
        if obs_noise > 0:
            values[:-1] += obs_noise * noise[i].standard_normal(values[:-1].shape)
        out.append(PanelRecord(str(i), times, values))
    return out
