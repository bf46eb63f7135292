"""Command-line interface.

Exit codes: 0 success, 1 data error, 2 convergence failure (outputs are
still written), 64 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional


from . import io
from .drift import DriftModel, SolverConfig
from .exceptions import CoxFlowError, DataError, NoConvergence
from .forecast import ltsr_batch
from .optimize import FitConfig, fit_alasso, fit_mle, fit_two_step
from .report import hazard_curve, run_study
from .simulate import sparse16_design, simulate_panel, simulate_terminal

__all__ = ["RunConfig", "cli_dispatch", "main", "EXIT_OK", "EXIT_DATA", "EXIT_CONVERGENCE", "EXIT_USAGE"]

logger = logging.getLogger("coxflow")

EXIT_OK, EXIT_DATA, EXIT_CONVERGENCE, EXIT_USAGE = 0, 1, 2, 64

COMMANDS = ("simulate", "fit", "fit-lasso", "fit-twostep", "forecast", "study", "hazard-curve")
DESIGNS = ("sparse16",)


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    """Validated parameters of one CLI run.

    Build with :meth:`from_mapping`, which rejects unknown keys.
    """

    command: str
    out: str = "."
    data: Optional[str] = None
    fit: Optional[str] = None
    design: str = "sparse16"
    baseline: str = "decaying"
    n: int = 400
    family: str = "constant"
    temporal: Optional[tuple] = None
    drift_params: Optional[tuple] = None
    drift: str = "known"
    steps: int = 64
    reps: int = 50
    method: str = "mle"
    seed: int = 0
    lambda_: Optional[float] = None
    zero_threshold: float = 1e-4
    max_iter: int = 200
    multistart: int = 3
    bandwidth: Optional[float] = None
    density: str = "loo"
    panel: bool = False
    obs_noise: float = 0.0
    workers: Optional[int] = None
    truth: Optional[str] = None
    points: int = 101
    t_max: Optional[float] = None

    @classmethod
    def from_mapping(cls, mapping: dict) -> "RunConfig":
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(mapping) - names)
        if unknown:
            raise UsageError(f"unknown configuration key(s): {', '.join(unknown)}")
        if "command" not in mapping:
            raise UsageError("missing command")
        clean = {k: v for k, v in mapping.items() if v is not None}
        for key in ("temporal", "drift_params"):
            if key in clean:
                clean[key] = tuple(clean[key])
        cfg = cls(**clean)
        cfg.validate()
        return cfg

    def validate(self):
        def need(cond, msg):
            if not cond:
                raise UsageError(msg)

        need(self.command in COMMANDS, f"unknown command {self.command!r}")
        need(self.design in DESIGNS, f"unknown design {self.design!r}")
        need(self.baseline in ("decaying", "constant"), "baseline must be 'decaying' or 'constant'")
        need(self.drift in ("known", "estimated"), "drift must be 'known' or 'estimated'")
        need(self.method in ("mle", "alasso", "twostep"), "method must be mle, alasso or twostep")
        need(self.density in ("loo", "full"), "density must be 'loo' or 'full'")
        need(self.n >= 1 and self.steps >= 1 and self.max_iter >= 1 and self.multistart >= 1, "counts must be positive")
        need(self.reps >= 2, "a study needs at least two replications")
        need(0 < self.zero_threshold < 1e-2, "zero-threshold must lie in (0, 0.01)")
        need(self.lambda_ is None or self.lambda_ > 0, "lambda must be positive")
        need(self.obs_noise >= 0, "obs-noise must be non-negative")
        need(self.points >= 2, "points must be at least 2")
        if self.command in ("fit", "fit-lasso", "fit-twostep"):
            need(self.data is not None, f"{self.command} needs --data")
        if self.command == "forecast":
            need(self.data is not None and self.fit is not None, "forecast needs --fit and --data")
        if self.command == "hazard-curve":
            need(self.fit is not None, "hazard-curve needs --fit")

    def fit_config(self) -> FitConfig:
        return FitConfig(max_outer_iters=self.max_iter, multistart_count=self.multistart, seed=self.seed,
                         zero_threshold=self.zero_threshold, lambda_override=self.lambda_,
                         bandwidth=self.bandwidth, density=self.density)

    def solver(self) -> SolverConfig:
        return SolverConfig(self.steps)

    def sim_design(self):
        kw = {} if self.t_max is None else {"t_max": self.t_max}
        return sparse16_design(self.n, self.seed, self.baseline, **kw)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n\n{self.format_help()}")


def _int_list(text):
    return tuple(int(v) for v in text.split(",") if v.strip())


def _float_list(text):
    return tuple(float(v) for v in text.split(",") if v.strip())


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="coxflow", description="Cox regression with drift-driven temporal covariates.")
    ap.add_argument("--config", help="JSON file with run parameters (command-line flags take precedence)")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    def common(p):
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--steps", type=int, help="Euler steps per trajectory")
        return p

    def fitting(p):
        p.add_argument("--family", help="drift family: constant or linear")
        p.add_argument("--temporal", type=_int_list, help="comma-separated 0-based indices of temporal covariates")
        p.add_argument("--max-iter", type=int, dest="max_iter")
        p.add_argument("--multistart", type=int)
        p.add_argument("--bandwidth", type=float)
        p.add_argument("--density", choices=("loo", "full"))
        return p

    def design(p):
        p.add_argument("--design", choices=DESIGNS)
        p.add_argument("--n", type=int)
        p.add_argument("--baseline", choices=("decaying", "constant"))
        p.add_argument("--t-max", type=float, dest="t_max")
        return p

    s = design(common(sub.add_parser("simulate", help="write a simulated data set")))
    s.add_argument("--panel", action="store_true", default=None, help="also write panel.csv")
    s.add_argument("--obs-noise", type=float, dest="obs_noise")

    helps = {"fit": "maximum-likelihood fit of terminal data",
             "fit-lasso": "adaptive-LASSO fit of terminal data"}
    for name, text in helps.items():
        f = fitting(common(sub.add_parser(name, help=text)))
        f.add_argument("--data", required=True)
        f.add_argument("--drift-params", type=_float_list, dest="drift_params",
                       help="hold the drift at these comma-separated values")
        if name == "fit-lasso":
            f.add_argument("--lambda", type=float, dest="lambda_")
            f.add_argument("--zero-threshold", type=float, dest="zero_threshold")

    t = fitting(common(sub.add_parser("fit-twostep", help="two-step fit of panel data")))
    t.add_argument("--data", required=True)

    fc = common(sub.add_parser("forecast", help="long-term survival for a CSV of queries"))
    fc.add_argument("--fit", required=True, help="fit.report from a fit command")
    fc.add_argument("--data", required=True, help="queries CSV: id, t, t_prime, covariates")

    st = fitting(design(common(sub.add_parser("study", help="replication study"))))
    st.add_argument("--reps", type=int)
    st.add_argument("--method", choices=("mle", "alasso", "twostep"))
    st.add_argument("--drift", choices=("known", "estimated"))
    st.add_argument("--lambda", type=float, dest="lambda_")
    st.add_argument("--zero-threshold", type=float, dest="zero_threshold")
    st.add_argument("--obs-noise", type=float, dest="obs_noise")
    st.add_argument("--workers", type=int)

    hc = common(sub.add_parser("hazard-curve", help="cumulative hazard table of a fit"))
    hc.add_argument("--fit", required=True)
    hc.add_argument("--truth", choices=("decaying", "constant"))
    hc.add_argument("--points", type=int)
    return ap


def parse_config(argv) -> RunConfig:
    ap = build_parser()
    ns = vars(ap.parse_args(argv))
    if ns.get("command") is None:
        raise UsageError(ap.format_help())
    mapping = {}
    cfg_path = ns.pop("config")
    ns.pop("verbose")
    if cfg_path:
        try:
            mapping.update(json.loads(Path(cfg_path).read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read --config: {exc}") from None
    mapping.update({k: v for k, v in ns.items() if v is not None})
    return RunConfig.from_mapping(mapping)


# ---------------------------------------------------------------------------
# commands


def _out(cfg):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _template(cfg, p):
    temporal = cfg.temporal if cfg.temporal else None
    return DriftModel.zeros(cfg.family, p, temporal)


def _write_fit(cfg, fit, columns, extra=None):
    out = _out(cfg)
    meta = {"command": cfg.command, "data": cfg.data}
    if extra:
        meta.update(extra)
    io.write_fit_report(fit, out / "fit.report", columns, meta)
    hz = fit.hazard_hat
    rows = zip(hz.knots[:-1], hz.knots[1:], hz.heights, hz.cumulative(hz.knots[1:]))
    io.write_rows(out / "hazard.csv", ["start", "end", "height", "cumulative_at_end"], rows)
    names = columns or [f"z_{k + 1}" for k in range(fit.p)]
    mask = fit.selection_mask
    io.write_rows(out / "coefficients.csv", ["covariate", "b_hat", "selected"],
                  ((names[j], fit.b_hat[j], 1 if mask is None else int(mask[j])) for j in range(fit.p)))
    print(f"{fit.method}: converged={fit.converged} iterations={fit.iterations} loglik={fit.loglik:.6f}")
    for j in range(fit.p):
        print(f"  {names[j]:>12s}  {fit.b_hat[j]: .6f}")
    print(f"wrote {out / 'fit.report'}, {out / 'hazard.csv'}, {out / 'coefficients.csv'}")
    return EXIT_OK if fit.converged else EXIT_CONVERGENCE


def cmd_simulate(cfg):
    out = _out(cfg)
    design = cfg.sim_design()
    recs = simulate_terminal(design)
    io.write_terminal_csv(recs, out / "terminal.csv")
    print(f"wrote {len(recs)} subjects to {out / 'terminal.csv'}")
    if cfg.panel:
        panel = simulate_panel(design, obs_noise=cfg.obs_noise)
        io.write_panel_csv(panel, out / "panel.csv")
        print(f"wrote {len(panel)} panels to {out / 'panel.csv'}")
    return EXIT_OK


def cmd_fit(cfg, lasso=False):
    ds = io.load_terminal_csv(cfg.data)
    template = _template(cfg, ds.p)
    a_fixed = cfg.drift_params
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NoConvergence)
        pilot = fit_mle(ds.records, template, cfg.fit_config(), cfg.solver(), a_fixed=a_fixed)
        fit = fit_alasso(ds.records, template, cfg.fit_config(), cfg.solver(), pilot=pilot, a_fixed=a_fixed) \
            if lasso else pilot
    code = _write_fit(cfg, fit, ds.columns, {"dropped_rows": len(ds.provenance["dropped"])})
    if lasso and not pilot.converged:
        code = EXIT_CONVERGENCE
    return code


def cmd_twostep(cfg):
    ds = io.load_panel_csv(cfg.data)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NoConvergence)
        fit = fit_two_step(ds.records, _template(cfg, ds.p), cfg.fit_config(), cfg.solver())
    return _write_fit(cfg, fit, ds.columns)


def cmd_forecast(cfg):
    fit = io.load_fit_report(cfg.fit)
    ids, queries, _ = io.load_queries_csv(cfg.data)
    res = ltsr_batch(fit, queries, cfg.solver())
    out = _out(cfg)
    io.write_rows(out / "forecast.csv", ["id", "survival", "extrapolated"],
                  zip(ids, res.survival, res.extrapolated.astype(int)))
    print(f"wrote {len(ids)} forecasts to {out / 'forecast.csv'} ({int(res.extrapolated.sum())} extrapolated)")
    return EXIT_OK


def cmd_study(cfg):
    design = cfg.sim_design()
    res = run_study(design, cfg.reps, cfg.method, cfg.fit_config(), cfg.solver(),
                    drift_known=cfg.drift == "known", workers=cfg.workers, obs_noise=cfg.obs_noise)
    out = _out(cfg)
    summary = res.summary()
    summary["config"] = {k: (list(v) if isinstance(v, tuple) else v)
                         for k, v in sorted(asdict(cfg).items()) if k not in ("out", "workers")}
    (out / "study.report").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    io.write_rows(out / "bias_std.csv", ["coefficient", "true", "bias", "std"],
                  ((f"b_{j}", t, b, s) for j, t, b, s in res.bias_table()))
    sel = res.selection
    io.write_rows(out / "selection.csv", ["n", "C(b0)", "IC(b0)", "U_fit", "C_fit", "O_fit"],
                  [(design.n, sel.C, sel.IC, sel.u_fit, sel.c_fit, sel.o_fit)])
    p = design.p
    rows = []
    for r, fit in enumerate(res.fits):
        if fit is None:
            rows.append([r, res.seeds[r], 0, *([float("nan")] * p)])
        else:
            rows.append([r, res.seeds[r], int(fit.converged), *fit.b_hat])
    io.write_rows(out / "replications.csv", ["replication", "seed", "converged", *[f"b_{j + 1}" for j in range(p)]],
                  rows)
    print(f"study: method={cfg.method} n={design.n} reps={cfg.reps} drift={summary['drift']} "
          f"failures={len(res.failures)} converged={res.n_converged}")
    print("  coef   true     bias      std")
    for j, t, b, s in res.bias_table():
        print(f"  b_{j:<3d} {t: .2f} {b: .5f} {s: .5f}")
    print(f"  C(b0)={sel.C:.2f} IC(b0)={sel.IC:.2f} U_fit={sel.u_fit:.2f} C_fit={sel.c_fit:.2f} O_fit={sel.o_fit:.2f}")
    print(f"wrote {out}/study.report, bias_std.csv, selection.csv, replications.csv")
    if res.failures or res.n_converged < len(res.successes):
        return EXIT_CONVERGENCE
    return EXIT_OK


def cmd_hazard_curve(cfg):
    from .simulate import ConstantBaseline, DecayingBaseline

    fit = io.load_fit_report(cfg.fit)
    truth = {"decaying": DecayingBaseline(), "constant": ConstantBaseline(), None: None}[cfg.truth]
    table = hazard_curve(fit, truth, n_points=cfg.points)
    header = ["t", "Lambda_hat"] + (["Lambda_true"] if truth is not None else [])
    out = _out(cfg)
    io.write_rows(out / "hazard_curve.csv", header, table.tolist())
    print(f"wrote {len(table)} rows to {out / 'hazard_curve.csv'}")
    return EXIT_OK


_COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "fit-lasso": lambda c: cmd_fit(c, lasso=True),
    "fit-twostep": cmd_twostep,
    "forecast": cmd_forecast,
    "study": cmd_study,
    "hazard-curve": cmd_hazard_curve,
}


def cli_dispatch(argv=None) -> int:
    """Run one command; returns the exit code."""
    argv = sys.argv[1:] if argv is None else list(argv)
    if "-v" in argv or "--verbose" in argv:
        logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = parse_config(argv)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    try:
        return _COMMANDS[cfg.command](cfg)
    except (DataError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (CoxFlowError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE


def main():
    sys.exit(cli_dispatch())


if __name__ == "__main__":
    main()
