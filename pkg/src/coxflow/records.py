"""Per-subject record types shared by the fitting and I/O layers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class TerminalRecord:
    """Covariates observed only at the event time."""

    id: str
    event_time: float
    z_at_event: np.ndarray

    def __post_init__(self):
        z = np.atleast_1d(np.asarray(self.z_at_event, dtype=float))
        object.__setattr__(self, "z_at_event", z)
        object.__setattr__(self, "event_time", float(self.event_time))
        if not self.event_time > 0 or not np.isfinite(self.event_time):
            raise ValueError(f"event_time must be positive and finite, got {self.event_time}")
        if not np.all(np.isfinite(z)):
            raise ValueError(f"non-finite covariates for subject {self.id!r}")


@dataclass(frozen=True)
class PanelRecord:
    """Longitudinal observations ``(t_ij, z_ij)``; the last one is the event."""

    id: str
    times: np.ndarray
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float).ravel()
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.shape[0] != times.shape[0]:
            raise ValueError("times and values must have the same number of rows")
        if np.any(np.diff(times) <= 0):
            raise ValueError(f"observation times must be strictly increasing for {self.id!r}")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @property
    def m(self) -> int:
        return self.times.shape[0]

    @property
    def event_time(self) -> float:
        return float(self.times[-1])

    @property
    def z_at_event(self) -> np.ndarray:
        return self.values[-1]

    def terminal(self) -> TerminalRecord:
        return TerminalRecord(self.id, self.event_time, self.z_at_event)
