"""CSV ingestion and report files.

Terminal files have columns ``id, event_time, <covariates>``; panel files
have ``id, obs_time, <covariates>, is_event``.  Covariate columns are the
remaining columns; when they are all named ``z_<k>`` they are ordered by
``k``, otherwise header order is kept.  Numbers are written with 17
significant digits so that files round-trip exactly.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .drift import DriftModel
from .exceptions import EmptyDataset, MissingEventRow, PanelOrderError, SchemaError
from .hazard import StepwiseHazard
from .optimize import FitResult
from .records import PanelRecord, TerminalRecord

__all__ = [
    "Dataset",
    "load_terminal_csv",
    "load_panel_csv",
    "load_queries_csv",
    "write_terminal_csv",
    "write_panel_csv",
    "write_rows",
    "fmt",
    "fit_to_dict",
    "fit_from_dict",
    "write_fit_report",
    "load_fit_report",
]

logger = logging.getLogger(__name__)

_ZCOL = re.compile(r"^z_(\d+)$")


def fmt(x) -> str:
    """Fixed 17-significant-digit rendering used in every output file."""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "%.17g" % float(x)
    return str(x)


@dataclass
class Dataset:
    """Parsed records with their provenance.

    ``provenance`` holds the source path, the number of data rows read and
    ``dropped``, a list of ``(line number, reason)`` pairs.
    """

    kind: str
    records: list
    p: int
    columns: list
    provenance: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.records)


def _covariate_columns(header, reserved):
    rest = [c for c in header if c not in reserved]
    if not rest:
        raise SchemaError("no covariate columns")
    matches = [_ZCOL.match(c) for c in rest]
    if all(matches):
        return sorted(rest, key=lambda c: int(_ZCOL.match(c).group(1)))
    return rest


def _read(path, required):
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise EmptyDataset(f"{path}: empty file") from None
        missing = [c for c in required if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {', '.join(missing)}")
        if len(set(header)) != len(header):
            raise SchemaError(f"{path}: duplicated column names")
        rows = [(i + 2, r) for i, r in enumerate(reader) if any(cell.strip() for cell in r)]
    return path, header, rows


def _floats(row, idx):
    return [float(row[i]) for i in idx]


def load_terminal_csv(path) -> Dataset:
    """Read a terminal-schema CSV.

    Rows whose event time is non-positive or non-finite, or whose covariates
    are not finite numbers, are dropped and logged.
    """
    path, header, rows = _read(path, ("id", "event_time"))
    zcols = _covariate_columns(header, {"id", "event_time"})
    i_id, i_t = header.index("id"), header.index("event_time")
    i_z = [header.index(c) for c in zcols]
    records, dropped = [], []
    for line, row in rows:
        if len(row) != len(header):
            dropped.append((line, "wrong number of fields"))
            continue
        try:
            t = float(row[i_t])
            z = _floats(row, i_z)
        except ValueError:
            dropped.append((line, "unparseable number"))
            continue
        if not (math.isfinite(t) and t > 0):
            dropped.append((line, f"event_time {row[i_t].strip()} is not positive and finite"))
            continue
        if not all(math.isfinite(v) for v in z):
            dropped.append((line, "non-finite covariate"))
            continue
        records.append(TerminalRecord(row[i_id].strip(), t, np.array(z)))
    _log_dropped(path, dropped)
    if not records:
        raise EmptyDataset(f"{path}: no usable rows")
    return Dataset("terminal", records, len(zcols), zcols,
                   {"source": str(path), "rows": len(rows), "dropped": dropped})


def load_panel_csv(path) -> Dataset:
    """Read a panel-schema CSV, grouping rows by ``id`` in order of first appearance.

    Within an id, observation times must increase strictly down the file and
    the single ``is_event = 1`` row must be the last one.
    """
    path, header, rows = _read(path, ("id", "obs_time", "is_event"))
    zcols = _covariate_columns(header, {"id", "obs_time", "is_event"})
    i_id, i_t, i_e = header.index("id"), header.index("obs_time"), header.index("is_event")
    i_z = [header.index(c) for c in zcols]
    groups: dict = {}
    dropped = []
    for line, row in rows:
        if len(row) != len(header):
            dropped.append((line, "wrong number of fields"))
            continue
        try:
            t = float(row[i_t])
            z = _floats(row, i_z)
            ev = int(row[i_e])
        except ValueError:
            dropped.append((line, "unparseable number"))
            continue
        if ev not in (0, 1):
            raise SchemaError(f"{path}:{line}: is_event must be 0 or 1")
        if not (math.isfinite(t) and t >= 0 and all(math.isfinite(v) for v in z)):
            dropped.append((line, "non-finite or negative value"))
            continue
        groups.setdefault(row[i_id].strip(), []).append((line, t, z, ev))
    _log_dropped(path, dropped)
    if not groups:
        raise EmptyDataset(f"{path}: no usable rows")
    records = []
    for sid, obs in groups.items():
        times = np.array([o[1] for o in obs])
        if np.any(np.diff(times) <= 0):
            raise PanelOrderError(f"{path}: observation times for id {sid!r} are not strictly increasing")
        events = [o[3] for o in obs]
        if sum(events) != 1 or events[-1] != 1:
            raise MissingEventRow(f"{path}: id {sid!r} needs exactly one is_event=1 row, at its last time")
        if times[-1] <= 0:
            raise SchemaError(f"{path}: id {sid!r} has a non-positive event time")
        records.append(PanelRecord(sid, times, np.array([o[2] for o in obs])))
    return Dataset("panel", records, len(zcols), zcols,
                   {"source": str(path), "rows": len(rows), "dropped": dropped})


def load_queries_csv(path):
    """Forecast queries: columns ``id, t, t_prime, <covariates>``.

    Returns ``(ids, queries, covariate column names)``.
    """
    from .forecast import ForecastQuery

    path, header, rows = _read(path, ("id", "t", "t_prime"))
    zcols = _covariate_columns(header, {"id", "t", "t_prime"})
    i_z = [header.index(c) for c in zcols]
    ids, queries = [], []
    for line, row in rows:
        try:
            q = ForecastQuery(np.array(_floats(row, i_z)), float(row[header.index("t")]),
                              float(row[header.index("t_prime")]))
        except (ValueError, IndexError) as exc:
            raise SchemaError(f"{path}:{line}: {exc}") from None
        ids.append(row[header.index("id")].strip())
        queries.append(q)
    if not queries:
        raise EmptyDataset(f"{path}: no queries")
    return ids, queries, zcols


def _log_dropped(path, dropped):
    for line, reason in dropped:
        logger.warning("%s:%d dropped (%s)", path, line, reason)


def write_rows(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])
    return path


def _zheader(p, columns):
    return list(columns) if columns is not None else [f"z_{k + 1}" for k in range(p)]


def write_terminal_csv(records, path, columns=None):
    p = records[0].z_at_event.shape[0]
    rows = ([r.id, r.event_time, *r.z_at_event] for r in records)
    return write_rows(path, ["id", "event_time", *_zheader(p, columns)], rows)


def write_panel_csv(records, path, columns=None):
    p = records[0].values.shape[1]

    def rows():
        for r in records:
            for j in range(r.m):
                yield [r.id, r.times[j], *r.values[j], int(j == r.m - 1)]

    return write_rows(path, ["id", "obs_time", *_zheader(p, columns), "is_event"], rows())


# ---------------------------------------------------------------------------
# fit reports


def _floats_out(a):
    return None if a is None else [float(v) for v in np.asarray(a, dtype=float).ravel()]


def fit_to_dict(fit: FitResult, columns=None, meta=None) -> dict:
    d = {
        "format": "coxflow-fit/1",
        "method": fit.method,
        "family": fit.drift.family,
        "p": fit.drift.p,
        "temporal": list(fit.drift.temporal),
        "a_hat": _floats_out(fit.a_hat),
        "b_hat": _floats_out(fit.b_hat),
        "hazard_knots": _floats_out(fit.hazard_hat.knots),
        "hazard_heights": _floats_out(fit.hazard_hat.heights),
        "loglik": float(fit.loglik),
        "converged": bool(fit.converged),
        "iterations": int(fit.iterations),
        "selection_mask": None if fit.selection_mask is None else [bool(v) for v in fit.selection_mask],
        "pilot_b": _floats_out(fit.pilot_b),
        "penalty_level": fit.penalty_level,
        "columns": list(columns) if columns is not None else None,
    }
    if meta:
        d["meta"] = meta
    return d


def fit_from_dict(d: dict) -> FitResult:
    if d.get("format") != "coxflow-fit/1":
        raise SchemaError("not a coxflow fit report")
    drift = DriftModel(d["family"], d["a_hat"], int(d["p"]), tuple(d["temporal"]))
    mask = d.get("selection_mask")
    return FitResult(
        drift=drift,
        b_hat=np.array(d["b_hat"], dtype=float),
        hazard_hat=StepwiseHazard(d["hazard_knots"], d["hazard_heights"]),
        loglik=float(d["loglik"]),
        converged=bool(d["converged"]),
        iterations=int(d["iterations"]),
        method=d["method"],
        selection_mask=None if mask is None else np.array(mask, dtype=bool),
        pilot_b=None if d.get("pilot_b") is None else np.array(d["pilot_b"], dtype=float),
        penalty_level=d.get("penalty_level"),
    )


def write_fit_report(fit: FitResult, path, columns=None, meta=None):
    """JSON report; floats use Python's shortest round-trip repr, so loading
    it back gives a bit-identical fit."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(fit_to_dict(fit, columns, meta), indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")
    return path


def load_fit_report(path) -> FitResult:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: {exc}") from None
    return fit_from_dict(d)
