"""Gaussian kernel estimate of the initial covariate density."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from ._validation import terminal_arrays
from .drift import DEFAULT_SOLVER, DriftModel, SolverConfig, backward_paths

__all__ = ["KernelDensity", "build_initial_density", "log_density", "loo_log_density", "default_bandwidth"]


def default_bandwidth(n):
    return float(n) ** -0.25


@dataclass(frozen=True)
class KernelDensity:
    """Equal-weight isotropic Gaussian mixture.

    Centers are stored in lexicographic order so that evaluation does not
    depend on the order in which subjects were supplied.
    """

    centers: np.ndarray = field(repr=False)
    bandwidth: float

    def __post_init__(self):
        c = np.array(self.centers, dtype=float)
        if c.ndim == 1:
            c = c[:, None]
        if c.shape[0] < 1:
            raise ValueError("need at least one center")
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        c = c[np.lexsort(c.T[::-1])]
        c.setflags(write=False)
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "bandwidth", float(self.bandwidth))

    @property
    def n(self):
        return self.centers.shape[0]

    @property
    def p(self):
        return self.centers.shape[1]

    def log_pdf(self, Z):
        """Log density at each row of ``Z`` (shape ``(m, p)``)."""
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        h = self.bandwidth
        d2 = cdist(Z, self.centers, "sqeuclidean")
        log_norm = -0.5 * self.p * np.log(2.0 * np.pi * h * h) - np.log(self.n)
        return logsumexp(-0.5 * d2 / (h * h), axis=1) + log_norm

    def log_pdf_loo(self):
        """Leave-one-out log density at each center (sorted order).

        Each center is scored by the mixture of the other ``n - 1`` kernels.
        """
        return loo_log_density(self.centers, self.bandwidth)

    def pdf(self, Z):
        return np.exp(self.log_pdf(Z))


def loo_log_density(points, bandwidth):
    """Leave-one-out Gaussian kernel log density at each row of ``points``."""
    X = np.atleast_2d(np.asarray(points, dtype=float))
    n, p = X.shape
    if n < 2:
        raise ValueError("leave-one-out needs at least two points")
    h = float(bandwidth)
    d2 = cdist(X, X, "sqeuclidean")
    np.fill_diagonal(d2, np.inf)
    log_norm = -0.5 * p * np.log(2.0 * np.pi * h * h) - np.log(n - 1)
    return logsumexp(-0.5 * d2 / (h * h), axis=1) + log_norm


def log_density(kd: KernelDensity, z) -> float:
    """``log p(z, 0)`` for a single point."""
    return float(kd.log_pdf(np.asarray(z, dtype=float).reshape(1, -1))[0])


def build_initial_density(
    model: DriftModel, data, cfg: SolverConfig = DEFAULT_SOLVER, bandwidth=None
) -> KernelDensity:
    """Kernel density of the back-propagated origins ``g(z_i, t_i, t_i | a)``.

    The bandwidth defaults to ``n ** -0.25``.
    """
    arr = terminal_arrays(data)
    if arr.n < 2:
        raise ValueError("the initial density needs at least two subjects")
    values, _ = backward_paths(model, arr.Z, arr.times, cfg)
    h = default_bandwidth(arr.n) if bandwidth is None else bandwidth
    return KernelDensity(values[:, -1], h)
