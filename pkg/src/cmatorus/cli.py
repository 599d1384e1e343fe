"""Command line entry point: ``cmatorus {solve,cone-check,estimates,manufacture,verify}``.

Exit codes: 0 success, 2 hypothesis violation, 3 numerical failure,
4 I/O or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .cone import DeltaTooLarge, cone_check
from .config import ConfigError, RunConfig, load
from .continuity import (
    ContinuityError,
    HypothesisViolation,
    b_bound_at,
    run_homotopy,
    solve_kahler_two_stage,
)
from .diagnostics import ConeViolation, estimates, w_field
from .geometry import CurvatureMismatch
from .mongeampere import Inadmissible, PencilEval, chi_u, sup_gauge
from .problem import Problem, build_problem
from .snapshot import SnapshotError, read_field, write_field

log = logging.getLogger("cmatorus")

EXIT_OK = 0
EXIT_HYPOTHESIS = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4

TRACE_COLUMNS = ("t", "b", "newtonIters", "resInf", "margin", "wMax", "c0Osc")


def _json_dump(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n")


def _verdict(value: float, tol: float, ok: bool) -> dict:
    return {"value": float(value), "tol": float(tol), "pass": bool(ok)}


class Run:
    """Output directory plus timing bookkeeping for one command."""

    def __init__(self, cfg: RunConfig, out: Path):
        self.cfg = cfg
        self.out = out
        out.mkdir(parents=True, exist_ok=True)
        self.timings = {}
        self._t0 = time.perf_counter()

    def field_dir(self) -> Path:
        d = self.out / self.cfg.get("outputs", "fieldDir")
        d.mkdir(parents=True, exist_ok=True)
        return d

    def mark(self, name: str) -> None:
        now = time.perf_counter()
        self.timings[name] = now - self._t0
        self._t0 = now

    def write_timings(self) -> None:
        # kept out of the report so reports stay byte-reproducible
        _json_dump({k: round(v, 6) for k, v in self.timings.items()}, self.out / "timings.json")


# -- solve -----------------------------------------------------------------


def _choose_pipeline(cfg: RunConfig, prob: Problem) -> str:
    chosen = cfg.get("problem", "pipeline")
    if chosen != "auto":
        return chosen
    d = prob.data
    if np.all(np.broadcast_to(d.varphi, d.grid.shape) <= d.psi):
        return "monotone"
    if prob.closed and prob.c is not None and float(d.psi.min()) >= prob.c - 1e-10:
        return "twoStage"
    return "direct"


def _trace_rows(trace, data, offset_t: float = 0.0) -> list:
    rows = []
    for s in trace:
        w = w_field(s.u, data)
        rows.append(
            [s.t + offset_t, s.b, s.newton_iters, s.res_inf, s.margin, float(w.max()), float(s.u.max() - s.u.min())]
        )
    return rows


def _write_trace(path: Path, rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRACE_COLUMNS)
    for row in rows:
        writer.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])
    path.write_text(buf.getvalue())


def cmd_solve(cfg: RunConfig, out: Path) -> int:
    run = Run(cfg, out)
    prob = build_problem(cfg)
    data = prob.data
    grid = data.grid
    report = {"configEcho": cfg.echo(), "inputHashes": prob.input_hashes(), "verdicts": {}}
    report_path = out / cfg.get("outputs", "reportJson")
    run.mark("setup")

    X_bar = chi_u(data, prob.ulbar)
    cone = cone_check(X_bar, data.psi, data.alpha, data.g, seed=cfg.seed)
    report["cone"] = cone.summary()
    report["verdicts"]["coneHolds"] = _verdict(cone.min_margin, 0.0, cone.holds and cone.wedge_agrees)
    run.mark("cone")
    if not cone.holds:
        report["status"] = "hypothesisViolation"
        report["error"] = "cone condition fails for psi"
        _json_dump(report, report_path)
        run.write_timings()
        return EXIT_HYPOTHESIS

    pipeline = _choose_pipeline(cfg, prob)
    report["pipeline"] = pipeline
    tol_b = 1e-8
    if pipeline == "twoStage":
        res = solve_kahler_two_stage(data, prob.ulbar, cfg.get("problem", "delta"), cfg.solver)
        stage1 = data.with_psi(res.psi0)
        rows = _trace_rows(res.trace0, stage1) + _trace_rows(res.trace1, data, offset_t=1.0)
        ref = res.stage0.varphi_v
        bound_gap = max(
            _bound_gap(res.trace0, stage1, ref, ref),
            _bound_gap(res.trace1, data, res.psi0, ref),
        )
        u, b = res.u, res.b
        report["kahlerConstant"] = res.c
        report["stage0"] = {"strict": res.stage0.strict, "varphiBelowPsi0": res.stage0.below_psi0}
        report["verdicts"]["finalBNonpositive"] = _verdict(b, tol_b, b <= tol_b)
        field_extra = {"psi0": res.psi0}
    else:
        start_rhs = _start_rhs(prob)
        trace = run_homotopy(data, (prob.ulbar, 0.0), cfg.solver, start_rhs=start_rhs)
        rows = _trace_rows(trace, data)
        bound_gap = _bound_gap(trace, data, start_rhs, start_rhs)
        u, b = trace[-1].u, trace[-1].b
        if pipeline == "monotone":
            b_max = max(s.b for s in trace)
            report["verdicts"]["btNonpositive"] = _verdict(b_max, 1e-10, b_max <= 1e-10)
        field_extra = {}
    run.mark("solve")

    report["verdicts"]["btBound"] = _verdict(bound_gap, tol_b, bound_gap <= tol_b)
    final_res = float(np.abs(PencilEval(data, u).residual(b, 1.0)).max())
    tol_n = cfg.solver.tol_newton
    report["verdicts"]["finalResidual"] = _verdict(final_res, tol_n, final_res <= tol_n)
    if prob.u_star is not None:
        err = float(np.abs((u - u.mean()) - (prob.u_star - prob.u_star.mean())).max())
        tol_r = cfg.get("problem", "recoveryTol")
        report["verdicts"]["recoveryError"] = _verdict(err, tol_r, err <= tol_r)
    report["final"] = {"b": float(b), "supGauge": "u written with sup u = 0"}
    est = estimates(u, data, prob.ulbar, cfg.get("estimates", "A"))
    report["estimateSummary"] = est.to_dict()
    run.mark("estimates")

    _write_trace(out / cfg.get("outputs", "traceCsv"), rows)
    fdir = run.field_dir()
    hashes = {"u": write_field(fdir / "u.bin", grid, sup_gauge(u), "solution")}
    hashes["psi"] = write_field(fdir / "psi.bin", grid, data.psi, "psi")
    for name, f in field_extra.items():
        hashes[name] = write_field(fdir / f"{name}.bin", grid, f, name)
    report["outputHashes"] = hashes
    ok = all(v["pass"] for v in report["verdicts"].values())
    report["status"] = "ok" if ok else "verdictFailed"
    _json_dump(report, report_path)
    run.mark("write")
    run.write_timings()
    return EXIT_OK if ok else EXIT_NUMERICAL


def _bound_gap(trace, data, start, reference) -> float:
    """Largest excess of ``|b_t|`` over its per-state bound."""
    return max(abs(s.b) - b_bound_at(s.t, data, start, reference) for s in trace)


def _start_rhs(prob: Problem):
    """Right-hand side solved by ``ulbar`` (``None`` means ``varphi``)."""
    if not np.any(prob.ulbar):
        return None
    from math import comb

    d = prob.data
    return comb(d.n, d.alpha) * np.exp(PencilEval(d, prob.ulbar).log_F())


# -- thin wrappers -----------------------------------------------------------


def cmd_cone(cfg: RunConfig, out: Path) -> int:
    run = Run(cfg, out)
    prob = build_problem(cfg)
    d = prob.data
    report = cone_check(chi_u(d, prob.ulbar), d.psi, d.alpha, d.g, seed=cfg.seed)
    payload = {"configEcho": cfg.echo(), "inputHashes": prob.input_hashes(), **report.summary()}
    payload["worstIndexCounts"] = np.bincount(report.worst_index.ravel(), minlength=d.n).tolist()
    payload["marginHash"] = write_field(run.field_dir() / "margin.bin", d.grid, report.margin, "coneMargin")
    _json_dump(payload, out / "cone.json")
    run.mark("cone")
    run.write_timings()
    return EXIT_OK if report.holds else EXIT_HYPOTHESIS


def cmd_estimates(cfg: RunConfig, out: Path) -> int:
    run = Run(cfg, out)
    prob = build_problem(cfg)
    d = prob.data
    u = d.grid.zeros()
    if cfg.path("estimates", "uPath") is not None:
        u, _ = read_field(cfg.path("estimates", "uPath"), d.grid)
    PencilEval(d, u)
    est = estimates(u, d, prob.ulbar, cfg.get("estimates", "A"))
    payload = {"configEcho": cfg.echo(), "inputHashes": prob.input_hashes(), **est.to_dict()}
    payload["phiHash"] = write_field(run.field_dir() / "phi.bin", d.grid, est.phi_values, "phongSturm")
    _json_dump(payload, out / "estimates.json")
    run.mark("estimates")
    run.write_timings()
    return EXIT_OK


def cmd_manufacture(cfg: RunConfig, out: Path) -> int:
    """Write ``u*``, ``psi`` and a ``solve.ini`` that solves for ``u*``."""
    if cfg.get("problem", "psi") != "manufactured":
        raise ConfigError("manufacture needs psi = manufactured")
    run = Run(cfg, out)
    prob = build_problem(cfg)
    d = prob.data
    fdir = run.field_dir()
    hashes = {
        "uStar": write_field(fdir / "u_star.bin", d.grid, prob.u_star, "uStar"),
        "psi": write_field(fdir / "psi.bin", d.grid, d.psi, "psi"),
    }
    echo = cfg.echo()
    manifest = {"n": d.n, "m": d.grid.m, "alpha": d.alpha, "diffMode": d.grid.diff_mode, "fields": hashes, "configEcho": echo}
    _json_dump(manifest, out / "problem.json")
    lines = []
    for section, entries in cfg.values.items():
        lines.append(f"[{section}]")
        for key, value in entries.items():
            if section == "problem" and key == "psi":
                value = "explicit"
            elif section == "problem" and key == "psiPath":
                value = str((fdir / "psi.bin").resolve())
            elif section == "problem" and key == "uStarPath":
                value = str((fdir / "u_star.bin").resolve())
            lines.append(f"{key} = {value}")
        lines.append("")
    (out / "solve.ini").write_text("\n".join(lines))
    run.mark("manufacture")
    run.write_timings()
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import run_battery

    results = run_battery(mutate=args.mutate, quick=args.quick)
    width = max(len(r.suite) for r in results)
    print(f"{'suite':<{width}}  {'checks':>6}  {'worst':>10}  {'tol':>8}  result")
    for r in results:
        print(f"{r.suite:<{width}}  {r.checks:>6}  {r.worst:>10.3e}  {r.tol:>8.1e}  {'PASS' if r.passed else 'FAIL'}")
        if not r.passed:
            print(f"    {r.detail}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_NUMERICAL


# -- argument parsing --------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cmatorus", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("solve", "cone-check", "estimates", "manufacture"):
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="INI configuration file")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
        p.add_argument("--out", type=Path, default=Path("out"))
        p.add_argument("--seed", type=int)
        p.add_argument("--grid", type=int, metavar="M")
        p.add_argument("--alpha", type=int)
        p.add_argument("--diff", choices=("spectral", "central2"))
    v = sub.add_parser("verify")
    v.add_argument("--quick", action="store_true", help="smaller sample counts")
    # test mode: inject a known defect to show the battery catches it
    v.add_argument("--mutate", choices=("grad-sign",), help=argparse.SUPPRESS)
    return parser


def _config_from_args(args) -> RunConfig:
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"run.seed={args.seed}")
    if args.grid is not None:
        overrides.append(f"problem.m={args.grid}")
    if args.alpha is not None:
        overrides.append(f"problem.alpha={args.alpha}")
    if args.diff is not None:
        overrides.append(f"problem.diffMode={args.diff}")
    return load(args.config, overrides)


COMMANDS = {"solve": cmd_solve, "cone-check": cmd_cone, "estimates": cmd_estimates, "manufacture": cmd_manufacture}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    if args.command == "verify":
        return cmd_verify(args)
    try:
        cfg = _config_from_args(args)
        return COMMANDS[args.command](cfg, args.out)
    except (ConfigError, SnapshotError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (HypothesisViolation, ConeViolation, DeltaTooLarge, Inadmissible) as exc:
        print(f"hypothesis violation: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except (ContinuityError, CurvatureMismatch) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
