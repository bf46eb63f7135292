"""Replication studies: bias and spread of the estimates, variable-selection
counts, and cumulative-hazard curves."""

from __future__ import annotations

import logging
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .drift import DEFAULT_SOLVER, SolverConfig
from .exceptions import CoxFlowError, NoConvergence
from .optimize import FitConfig, FitResult, fit_alasso, fit_mle, fit_two_step
from .simulate import SimDesign, simulate_panel, simulate_terminal

__all__ = [
    "METHODS",
    "SelectionMetrics",
    "StudyResult",
    "selection_metrics",
    "replication_seeds",
    "run_study",
    "hazard_curve",
    "worker_count",
]

logger = logging.getLogger(__name__)

METHODS = ("mle", "alasso", "twostep")


def worker_count(requested: Optional[int] = None) -> int:
    """Number of worker processes: ``requested``, else ``COXFLOW_THREADS``,
    else the CPU count; never more than the CPU count."""
    cpus = os.cpu_count() or 1
    if requested is None:
        env = os.environ.get("COXFLOW_THREADS")
        requested = int(env) if env else cpus
    return max(1, min(int(requested), cpus))


@dataclass(frozen=True)
class SelectionMetrics:
    """Averages over replications of the selection outcome.

    ``C`` is the mean number of true zeros estimated as zero and ``IC`` the
    mean number of true non-zeros estimated as zero.  ``u_fit`` is the share
    of fits missing at least one true non-zero, ``c_fit`` the share selecting
    exactly the true support and ``o_fit`` the share selecting a strict
    superset of it.
    """

    C: float
    IC: float
    u_fit: float
    c_fit: float
    o_fit: float


def selection_metrics(masks, support) -> SelectionMetrics:
    support = np.asarray(support, dtype=bool)
    masks = np.asarray(masks, dtype=bool).reshape(-1, support.shape[0])
    if masks.shape[0] == 0:
        return SelectionMetrics(*(5 * [float("nan")]))
    zeroed = ~masks
    missing = np.any(zeroed & support, axis=1)
    exact = np.all(masks == support, axis=1)
    superset = ~missing & ~exact
    return SelectionMetrics(
        C=float(np.mean(np.sum(zeroed & ~support, axis=1))),
        IC=float(np.mean(np.sum(zeroed & support, axis=1))),
        u_fit=float(np.mean(missing)),
        c_fit=float(np.mean(exact)),
        o_fit=float(np.mean(superset)),
    )


@dataclass
class StudyResult:
    method: str
    design: SimDesign
    b0: np.ndarray
    seeds: list
    fits: list = field(repr=False)
    failures: list = field(default_factory=list)
    drift_known: bool = True

    @property
    def successes(self):
        return [f for f in self.fits if f is not None]

    @property
    def estimates(self):
        """``(replications, p)`` array of ``b_hat`` for successful replications."""
        ok = self.successes
        return np.vstack([f.b_hat for f in ok]) if ok else np.zeros((0, self.b0.shape[0]))

    @property
    def drift_estimates(self):
        ok = self.successes
        return np.vstack([f.a_hat for f in ok]) if ok else np.zeros((0, self.design.drift.d))

    @property
    def bias(self):
        B = self.estimates
        return B.mean(axis=0) - self.b0 if B.shape[0] else np.full(B.shape[1], np.nan)

    @property
    def std(self):
        B = self.estimates
        return B.std(axis=0, ddof=1) if B.shape[0] > 1 else np.full(B.shape[1], np.nan)

    @property
    def masks(self):
        ok = self.successes
        return np.vstack([self._mask(f) for f in ok]) if ok else np.zeros((0, self.b0.shape[0]), dtype=bool)

    @staticmethod
    def _mask(fit: FitResult):
        if fit.selection_mask is not None:
            return fit.selection_mask
        return fit.b_hat != 0

    @property
    def selection(self) -> SelectionMetrics:
        return selection_metrics(self.masks, self.b0 != 0)

    @property
    def n_converged(self):
        return sum(bool(f.converged) for f in self.successes)

    def bias_table(self):
        """Rows ``(coefficient index, truth, bias, std)`` for the true non-zeros."""
        idx = np.flatnonzero(self.b0)
        return [(int(j) + 1, float(self.b0[j]), float(self.bias[j]), float(self.std[j])) for j in idx]

    def summary(self) -> dict:
        sel = self.selection
        out = {
            "method": self.method,
            "n": self.design.n,
            "p": self.design.p,
            "replications": len(self.seeds),
            "failures": len(self.failures),
            "converged": self.n_converged,
            "drift": "known" if self.drift_known else "estimated",
            "seed": self.design.seed,
            "bias": [float(v) for v in self.bias],
            "std": [float(v) for v in self.std],
            "selection": {"C": sel.C, "IC": sel.IC, "U_fit": sel.u_fit, "C_fit": sel.c_fit, "O_fit": sel.o_fit},
        }
        if not self.drift_known:
            A = self.drift_estimates
            out["drift_bias"] = [float(v) for v in A.mean(axis=0) - self.design.drift.a]
        return out


def replication_seeds(seed: int, replications: int) -> list:
    """Independent per-replication seeds derived from one study seed."""
    return [int(s) for s in np.random.SeedSequence(int(seed)).generate_state(replications)]


@dataclass(frozen=True)
class _Job:
    design: SimDesign
    method: str
    cfg: FitConfig
    solver: SolverConfig
    drift_known: bool
    schedule: Optional[tuple]
    obs_noise: float


def _run_one(job: _Job):
    d = job.design
    a_fixed = d.drift.a if job.drift_known else None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NoConvergence)
        try:
            if job.method == "twostep":
                panel = simulate_panel(d, job.schedule, job.obs_noise)
                return fit_two_step(panel, d.drift, job.cfg, job.solver), None
            data = simulate_terminal(d)
            pilot = fit_mle(data, d.drift, job.cfg, job.solver, a_fixed=a_fixed)
            if job.method == "mle":
                return pilot, None
            return fit_alasso(data, d.drift, job.cfg, job.solver, pilot=pilot, a_fixed=a_fixed), None
        except (CoxFlowError, FloatingPointError, ValueError) as exc:
            return None, f"{type(exc).__name__}: {exc}"


def run_study(design: SimDesign, replications: int, method: str = "mle", cfg: FitConfig = FitConfig(),
              solver: SolverConfig = DEFAULT_SOLVER, drift_known: bool = True,
              seeds: Optional[Sequence[int]] = None, workers: Optional[int] = None,
              schedule=None, obs_noise: float = 0.0) -> StudyResult:
    """Simulate and fit ``replications`` independent data sets.

    Parameters
    ----------
    method : {"mle", "alasso", "twostep"}
    drift_known : bool
        Hold the drift at the design's true value (``mle`` and ``alasso``);
        otherwise it is estimated jointly with ``b``.  The two-step method
        always estimates it from panels.
    seeds : sequence of int, optional
        Per-replication simulation seeds; derived from ``design.seed`` by
        default.
    workers : int, optional
        Worker processes; see :func:`worker_count`.
    schedule, obs_noise
        Panel options for ``twostep`` (see :func:`simulate_panel`).

    Failed replications are recorded in ``failures`` and skipped in the
    aggregates.  Results do not depend on the number of workers.
    """
    method = method.lower().replace("-", "").replace("_", "")
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    if seeds is None:
        if replications < 2:
            raise ValueError("a study needs at least two replications")
        seeds = replication_seeds(design.seed, replications)
    seeds = [int(s) for s in seeds]
    if callable(schedule):
        raise TypeError("run_study takes a schedule as a sequence of fractions")
    sched = None if schedule is None else tuple(schedule)
    jobs = [_Job(design.with_(seed=s), method, cfg, solver, drift_known, sched, obs_noise) for s in seeds]
    nw = min(worker_count(workers), len(jobs))
    if nw > 1:
        with ProcessPoolExecutor(max_workers=nw) as pool:
            outcomes = list(pool.map(_run_one, jobs))
    else:
        outcomes = [_run_one(j) for j in jobs]
    fits, failures = [], []
    for r, (fit, err) in enumerate(outcomes):
        fits.append(fit)
        if err is not None:
            failures.append((r, err))
            logger.warning("replication %d failed: %s", r, err)
    return StudyResult(method, design, np.array(design.b0), seeds, fits, failures,
                       drift_known and method != "twostep")


def hazard_curve(fit, truth=None, grid=None, n_points=101):
    """Cumulative hazard table with columns ``t``, ``Lambda_hat`` and, when
    ``truth`` is given, ``Lambda_true``.

    ``truth`` is any object with a ``cumulative(t)`` method (the baselines of
    :mod:`coxflow.simulate`, or a :class:`~coxflow.hazard.StepwiseHazard`).
    The default grid spans ``[0, last knot]``.
    """
    hz = fit.hazard_hat if hasattr(fit, "hazard_hat") else fit
    t = np.linspace(0.0, hz.last_knot, n_points) if grid is None else np.asarray(grid, dtype=float)
    cols = [t, np.asarray(hz.cumulative(t), dtype=float)]
    if truth is not None:
        cols.append(np.asarray(truth.cumulative(t), dtype=float))
    return np.column_stack(cols)
