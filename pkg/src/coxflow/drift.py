"""Drift families and Euler solutions of the trajectory IVPs.

A drift ``q(z, t | a)`` defines, for every observation ``(z, t)``, the mean
covariate path that reaches ``z`` at time ``t``.  ``g(z, t, s)`` walks that
path backwards for a duration ``s`` (so ``g(z, t, t)`` is the implied origin
at time zero) and ``g_inverse`` walks it forwards.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .exceptions import NonFiniteState, SingularFlow

__all__ = [
    "ConstantDrift",
    "LinearDrift",
    "DriftModel",
    "SolverConfig",
    "Trajectory",
    "register_family",
    "solve_g",
    "solve_g_inverse",
    "jacobian_logdet",
    "backward_paths",
    "backward_logdet",
    "forward_paths",
]


class ConstantDrift:
    """``q(z, t | a) = a``; paths are straight lines."""

    name = "constant"
    state_free = True
    constant_jacobian = True

    @staticmethod
    def n_params(k):
        return k

    @staticmethod
    def rate(a, z, t):
        return np.broadcast_to(a, z.shape)

    @staticmethod
    def rate_jacobian(a, z, t):
        k = z.shape[-1]
        return np.zeros(z.shape[:-1] + (k, k))


class LinearDrift:
    """``q(z, t | a) = c + A z`` with ``a = (c, vec(A))`` (row-major)."""

    name = "linear"
    state_free = False
    constant_jacobian = True

    @staticmethod
    def n_params(k):
        return k + k * k

    @staticmethod
    def split(a, k):
        return a[:k], a[k:].reshape(k, k)

    def rate(self, a, z, t):
        k = z.shape[-1]
        c, A = self.split(a, k)
        return c + z @ A.T

    def rate_jacobian(self, a, z, t):
        k = z.shape[-1]
        _, A = self.split(a, k)
        return np.broadcast_to(A, z.shape[:-1] + (k, k))


_FAMILIES = {}
_ALIASES = {"Constant": "constant", "LinearInZ": "linear", "linear_in_z": "linear"}


def register_family(family, *aliases):
    """Make a drift family available by name.

    A family provides ``n_params(k)``, ``rate(a, z, t)`` and
    ``rate_jacobian(a, z, t)`` acting on the temporal block of ``z`` (last
    axis of size ``k``), plus the boolean attributes ``state_free`` (rate
    ignores ``z`` and ``t``) and ``constant_jacobian`` (the z-gradient
    ignores ``z`` and ``t``).
    """
    _FAMILIES[family.name] = family
    for alias in aliases:
        _ALIASES[alias] = family.name
    return family


register_family(ConstantDrift())
register_family(LinearDrift())


def get_family(name):
    key = _ALIASES.get(name, name)
    try:
        return _FAMILIES[key]
    except KeyError:
        raise ValueError(f"unknown drift family {name!r}; known: {sorted(_FAMILIES)}") from None


@dataclass(frozen=True)
class DriftModel:
    """A parametric drift acting on a block of the covariate vector.

    Parameters
    ----------
    family : str
        Registered family name (``"constant"`` or ``"linear"``).
    a : array-like
        Drift parameters, length ``family.n_params(k)``.
    p : int
        Covariate dimension.
    temporal : sequence of int, optional
        Coordinates that move along the drift. The rest have zero drift.
        Defaults to all ``p`` coordinates.
    """

    family: str
    a: np.ndarray
    p: int
    temporal: Optional[tuple] = None

    def __post_init__(self):
        impl = get_family(self.family)
        object.__setattr__(self, "family", impl.name)
        temporal = tuple(range(self.p)) if self.temporal is None else tuple(int(i) for i in self.temporal)
        if any(i < 0 or i >= self.p for i in temporal) or len(set(temporal)) != len(temporal):
            raise ValueError(f"invalid temporal coordinates {temporal} for p={self.p}")
        object.__setattr__(self, "temporal", temporal)
        a = np.array(self.a, dtype=float).ravel()
        if a.shape[0] != impl.n_params(len(temporal)):
            raise ValueError(
                f"{impl.name} drift on {len(temporal)} coordinates needs "
                f"{impl.n_params(len(temporal))} parameters, got {a.shape[0]}"
            )
        if not np.all(np.isfinite(a)):
            raise ValueError("drift parameters must be finite")
        a.setflags(write=False)
        object.__setattr__(self, "a", a)

    @classmethod
    def zeros(cls, family, p, temporal=None):
        k = p if temporal is None else len(tuple(temporal))
        return cls(family, np.zeros(get_family(family).n_params(k)), p, temporal)

    @property
    def impl(self):
        return get_family(self.family)

    @property
    def k(self):
        return len(self.temporal)

    @property
    def d(self):
        return self.a.shape[0]

    @property
    def state_free(self):
        return self.impl.state_free

    @property
    def _full_block(self):
        return self.temporal == tuple(range(self.p))

    def with_params(self, a):
        return DriftModel(self.family, a, self.p, self.temporal)

    def q(self, z, t=0.0):
        """Drift rate at ``(z, t)``; ``z`` has trailing axis ``p``."""
        z = np.asarray(z, dtype=float)
        if self._full_block:
            return np.array(self.impl.rate(self.a, z, t), dtype=float)
        idx = list(self.temporal)
        out = np.zeros(z.shape)
        out[..., idx] = self.impl.rate(self.a, z[..., idx], t)
        return out

    def dq_dz(self, z, t=0.0):
        """z-gradient of the drift, trailing shape ``(p, p)``."""
        z = np.asarray(z, dtype=float)
        if self._full_block:
            return np.array(self.impl.rate_jacobian(self.a, z, t), dtype=float)
        idx = np.array(self.temporal)
        out = np.zeros(z.shape + (self.p,))
        out[..., idx[:, None], idx[None, :]] = self.impl.rate_jacobian(self.a, z[..., idx], t)
        return out


@dataclass(frozen=True)
class SolverConfig:
    steps_per_trajectory: int = 64
    method: str = "euler"

    def __post_init__(self):
        if int(self.steps_per_trajectory) < 1:
            raise ValueError("steps_per_trajectory must be >= 1")
        if self.method.lower() != "euler":
            raise ValueError(f"unsupported solver method {self.method!r}")
        object.__setattr__(self, "steps_per_trajectory", int(self.steps_per_trajectory))


DEFAULT_SOLVER = SolverConfig()


@dataclass(frozen=True)
class Trajectory:
    origin: np.ndarray
    horizon: float
    grid: np.ndarray
    values: np.ndarray = field(repr=False)
    jac_log: np.ndarray = field(repr=False)

    @property
    def end(self):
        return self.values[-1]


def _check_finite(values):
    if not np.all(np.isfinite(values)):
        raise NonFiniteState("trajectory overflowed; drift parameters incompatible with horizon")
    return values


def _as_batch(Z, p):
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z.reshape(-1, p) if Z.shape[0] != p else Z[None, :]
    return Z


def backward_paths(model: DriftModel, Z, T, cfg: SolverConfig = DEFAULT_SOLVER, duration=None):
    """Euler solutions of ``z'(s) = -q(z(s), t - s)`` for a batch of origins.

    Returns ``(values, s)`` with ``values[i, k] = g(Z[i], T[i], s[i, k])`` on
    the uniform grid ``s[i, k] = D[i] * k / M``, where the duration ``D``
    defaults to ``T`` (a full walk back to time zero).
    """
    Z = _as_batch(Z, model.p)
    T = np.asarray(T, dtype=float).reshape(-1)
    D = T if duration is None else np.broadcast_to(np.asarray(duration, dtype=float).reshape(-1), T.shape)
    M = cfg.steps_per_trajectory
    s = D[:, None] * (np.arange(M + 1) / M)
    with np.errstate(over="ignore", invalid="ignore"):
        if model.state_free:
            rate = model.q(Z, 0.0)
            values = Z[:, None, :] - s[:, :, None] * rate[:, None, :]
        else:
            h = (D / M)[:, None]
            values = np.empty((Z.shape[0], M + 1, model.p))
            values[:, 0] = Z
            for k in range(M):
                values[:, k + 1] = values[:, k] - h * model.q(values[:, k], (T - s[:, k])[:, None])
    return _check_finite(values), s


def forward_paths(model: DriftModel, Z, S, D, cfg: SolverConfig = DEFAULT_SOLVER):
    """Euler solutions of ``z'(tau) = +q(z(tau), S + tau)`` over ``[0, D]``.

    Returns ``(values, tau)``; ``values[i, -1] = g_inverse(Z[i], S[i], D[i])``.
    """
    Z = _as_batch(Z, model.p)
    S = np.broadcast_to(np.asarray(S, dtype=float).reshape(-1), (Z.shape[0],))
    D = np.broadcast_to(np.asarray(D, dtype=float).reshape(-1), (Z.shape[0],))
    M = cfg.steps_per_trajectory
    tau = D[:, None] * (np.arange(M + 1) / M)
    with np.errstate(over="ignore", invalid="ignore"):
        if model.state_free:
            rate = model.q(Z, 0.0)
            values = Z[:, None, :] + tau[:, :, None] * rate[:, None, :]
        else:
            h = (D / M)[:, None]
            values = np.empty((Z.shape[0], M + 1, model.p))
            values[:, 0] = Z
            for k in range(M):
                values[:, k + 1] = values[:, k] + h * model.q(values[:, k], (S + tau[:, k])[:, None])
    return _check_finite(values), tau


def backward_logdet(model: DriftModel, values, T, cfg: SolverConfig = DEFAULT_SOLVER):
    """Running log-determinant of the Euler flow's Jacobian along ``values``.

    The Euler map ``z -> z - h q(z)`` has Jacobian ``I - h dq/dz``; the
    product over steps is the exact Jacobian of the discrete solution.
    Returns an array of shape ``(n, M + 1)``.
    """
    T = np.asarray(T, dtype=float).reshape(-1)
    n = T.shape[0]
    M = cfg.steps_per_trajectory
    out = np.zeros((n, M + 1))
    if model.family == "constant":
        return out
    h = T / M
    eye = np.eye(model.p)
    impl = model.impl
    if impl.constant_jacobian:
        Jq = model.dq_dz(np.zeros(model.p))
        sign, ld = np.linalg.slogdet(eye[None] - h[:, None, None] * Jq[None])
        if np.any(sign <= 0):
            raise SingularFlow("flow Jacobian lost orientation; use more solver steps")
        return ld[:, None] * np.arange(M + 1)[None, :]
    for k in range(M):
        Jq = model.dq_dz(values[:, k], (T - T * k / M)[:, None])
        sign, ld = np.linalg.slogdet(eye[None] - h[:, None, None] * Jq)
        if np.any(sign <= 0):
            raise SingularFlow("flow Jacobian lost orientation; use more solver steps")
        out[:, k + 1] = out[:, k] + ld
    return out


def solve_g(model: DriftModel, z, t, cfg: SolverConfig = DEFAULT_SOLVER) -> Trajectory:
    """Walk the mean path through ``(z, t)`` back to time zero."""
    z = np.asarray(z, dtype=float).ravel()
    t = float(t)
    if not np.isfinite(t) or t < 0:
        raise ValueError("t must be finite and non-negative")
    if t == 0.0:
        return Trajectory(z.copy(), 0.0, np.zeros(1), z[None, :].copy(), np.zeros(1))
    values, s = backward_paths(model, z[None, :], [t], cfg)
    jac = backward_logdet(model, values, [t], cfg)
    return Trajectory(z.copy(), t, s[0], values[0], jac[0])


def solve_g_inverse(model: DriftModel, z, s, t, cfg: SolverConfig = DEFAULT_SOLVER):
    """Point reached after following the drift forward from ``(z, s)`` for ``t``."""
    z = np.asarray(z, dtype=float).ravel()
    if t < 0 or s < 0 or not (np.isfinite(s) and np.isfinite(t)):
        raise ValueError("s and t must be finite and non-negative")
    if t == 0:
        return z.copy()
    values, _ = forward_paths(model, z[None, :], [s], [t], cfg)
    return values[0, -1]


def jacobian_logdet(model: DriftModel, z, t, cfg: SolverConfig = DEFAULT_SOLVER) -> float:
    """log det of the Jacobian of ``z -> g(z, t, t)``."""
    return float(solve_g(model, z, t, cfg).jac_log[-1])
