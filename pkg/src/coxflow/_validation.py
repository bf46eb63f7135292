"""Input validation helpers shared by the functional and estimator APIs."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from sklearn.utils.validation import check_array, check_consistent_length

from .records import PanelRecord, TerminalRecord

TIE_JITTER = 1e-9


@dataclass(frozen=True)
class TerminalArrays:
    """Terminal data sorted by event time.

    ``times`` holds the integration knots (ties broken by jitter) and
    ``raw_times`` the original values in the same order.
    """

    ids: np.ndarray
    times: np.ndarray
    raw_times: np.ndarray
    Z: np.ndarray
    order: np.ndarray

    @property
    def n(self) -> int:
        return self.times.shape[0]

    @property
    def p(self) -> int:
        return self.Z.shape[1]


def check_XT(X, T):
    X = check_array(X, dtype=np.float64, ensure_2d=True)
    T = check_array(T, dtype=np.float64, ensure_2d=False).ravel()
    check_consistent_length(X, T)
    if np.any(T <= 0):
        raise ValueError("event times must be strictly positive")
    return X, T


def break_ties(sorted_times):
    """Separate tied sorted times by ``TIE_JITTER`` times their rank in the tie."""
    t = np.array(sorted_times, dtype=float)
    for i in range(1, t.shape[0]):
        if t[i] <= t[i - 1]:
            t[i] = t[i - 1] + TIE_JITTER
    return t


def terminal_arrays(data, T=None) -> TerminalArrays:
    """Normalize terminal data to sorted arrays.

    ``data`` is either a sequence of :class:`TerminalRecord` or a covariate
    matrix passed together with ``T``.
    """
    if T is None:
        if isinstance(data, TerminalArrays):
            return data
        records = list(data)
        if not records:
            raise ValueError("empty dataset")
        if not all(isinstance(r, TerminalRecord) for r in records):
            raise TypeError("expected a sequence of TerminalRecord")
        ids = np.array([r.id for r in records], dtype=object)
        X = np.vstack([r.z_at_event for r in records])
        T = np.array([r.event_time for r in records])
    else:
        X, T = check_XT(data, T)
        ids = np.array([str(i) for i in range(X.shape[0])], dtype=object)
    order = np.argsort(T, kind="stable")
    raw = T[order]
    return TerminalArrays(ids[order], break_ties(raw), raw, X[order], order)


def check_panel(panel: Sequence[PanelRecord], min_obs: int = 2):
    from .exceptions import InsufficientPanel

    panel = list(panel)
    if not panel:
        raise ValueError("empty panel")
    p = panel[0].values.shape[1]
    for rec in panel:
        if rec.values.shape[1] != p:
            raise ValueError("inconsistent covariate dimension across panel records")
        if rec.m < min_obs:
            raise InsufficientPanel(f"subject {rec.id!r} has {rec.m} observations; need >= {min_obs}")
    return panel
