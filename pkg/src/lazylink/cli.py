"""Command-line entry point: check, design, run, compare, presets.

Exit codes: 0 success, 1 validation failure, 2 runtime failure.  Set the
LAZYLINK_LOG environment variable (DEBUG/INFO/WARNING/...) for verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import __version__, analysis, matlib
from .analysis import LyapunovMonitor, observer_monitor
from .config import (Experiment, ExperimentConfig, ParseError,
                     build_experiment, load_config, preset_config, presets)
from .hybridsim import HybridArc, Mode, NonFiniteState, distance_to_target, simulate
from .policy import AsyncPolicy, DesignInfeasible, SyncPolicy, TabuadaBaseline
from .system import NotStabilized, check_assumption1, check_observer

log = logging.getLogger("lazylink")

_FMT = "{:.17g}"


def _fmt(v):
    return _FMT.format(float(v))


@dataclass
class RunResult:
    config: ExperimentConfig
    exp: Experiment
    arc: HybridArc
    monitor: LyapunovMonitor | None
    summary: dict


def cmd_check(cfg: ExperimentConfig):
    """Validate assumptions and policy invariants; returns (ok, report)."""
    report = []

    def add(condition, passed, detail=""):
        report.append({"condition": condition, "passed": bool(passed),
                       "detail": detail})

    try:
        exp = build_experiment(cfg)
    except (DesignInfeasible, NotStabilized, ValueError,
            matlib.MatlibError) as exc:
        add("experiment construction", False, str(exc))
        return False, report

    a1 = check_assumption1(exp.cascade)
    add("assumption 1: A + BC Hurwitz", a1)
    if exp.observer is not None:
        obs_ok = check_observer(exp.cascade, exp.observer)
        add("observer: A - LC Hurwitz", obs_ok)
    if isinstance(exp.policy, SyncPolicy):
        add("sync policy invariants", True,
            "P1 solved, blkdiag(P1,P2) > 0, gamma_x I < Q")
    elif isinstance(exp.policy, AsyncPolicy):
        pol = exp.policy
        add("async policy invariants", True,
            f"a={pol.a:.6g} b={pol.b:.6g} c={pol.c:.6g}")
    else:
        add("baseline parameters", True, f"sigma={exp.policy.sigma}")
    ok = all(r["passed"] for r in report)
    return ok, report


def run_experiment(cfg: ExperimentConfig, seed=None) -> RunResult:
    """Simulate one experiment and assemble its summary."""
    exp = build_experiment(cfg, seed=seed)
    arc = simulate(exp.cascade, exp.policy, exp.x0, exp.nu0, exp.sim,
                   pert=exp.pert, observer=exp.observer, xhat0=exp.xhat0)
    monitor = None
    if isinstance(exp.policy, (SyncPolicy, AsyncPolicy)):
        if exp.observer is not None:
            monitor = observer_monitor(exp.policy, exp.cascade, exp.observer,
                                       lam=exp.lam)
        else:
            monitor = LyapunovMonitor(policy=exp.policy, lam=exp.lam)

    stats = analysis.transmission_stats(arc)
    try:
        fit = analysis.fit_decay(arc, exp.sim.convergence_radius)
        fit_info = {"k": fit.k, "gamma_rate": fit.gamma_rate, "r2": fit.r2,
                    "n_samples": fit.n_samples}
    except analysis.InsufficientData as exc:
        fit_info = {"error": str(exc)}

    audit_info = None
    if monitor is not None:
        lam_used, rep = analysis.find_certifying_lambda(
            arc, monitor, exp.sim.convergence_radius, exp.sim.event_tol)
        audit_info = {
            "clean": rep.clean,
            "lambda_used": lam_used,
            "jump_increases": len(rep.jump_increases),
            "flow_increases": len(rep.flow_increases),
            "residual_flow_increases": len(rep.residual_flow_increases),
            "dwell_violations": len(rep.dwell_violations),
            "timer_bound_violations": len(rep.timer_bound_violations),
            "max_tau": rep.max_tau,
        }
        if lam_used is not None and rep.clean:
            monitor = monitor.with_lambda(lam_used)

    summary = {
        "tool": {"name": "lazylink", "version": __version__},
        "config": cfg.to_dict(),
        "converged": arc.converged,
        "budget_exceeded": arc.budget_exceeded,
        "t_final": arc.t_final,
        "j_final": arc.j_final,
        "final_distance": distance_to_target(arc.samples[-1].state),
        "transmissions": {
            "total": stats.total,
            "apparent": stats.apparent,
            "per_sensor": {str(k): v for k, v in stats.per_sensor.items()},
            "min_interval": stats.min_interval,
            "mean_interval": stats.mean_interval,
            "max_interval": stats.max_interval,
            "rate": stats.rate,
        },
        "decay_fit": fit_info,
        "audit": audit_info,
    }
    return RunResult(config=cfg, exp=exp, arc=arc, monitor=monitor,
                     summary=summary)


def _trace_header(exp: Experiment):
    n, q = exp.cascade.n, exp.cascade.q
    p = exp.policy.timer_count
    cols = ["t", "j"]
    cols += [f"x{i}" for i in range(n)]
    if exp.observer is not None:
        cols += [f"xhat{i}" for i in range(n)]
    cols += [f"e{i}" for i in range(q)]
    cols += [f"tau{i}" for i in range(p)]
    cols += [f"nu{i}" for i in range(q)]
    cols += ["W", "dist", "event", "sensors"]
    return cols


def trace_rows(result: RunResult):
    """Trace rows (strings) in the column order of _trace_header."""
    exp = result.exp
    C = exp.cascade.C
    event_by_j = {}
    for ev in result.arc.events:
        event_by_j[ev.j] = ev
    seen_j = set()
    rows = []
    for s in result.arc.samples:
        st = s.state
        ref = st.xhat if st.mode is Mode.OUTPUT_FEEDBACK else st.x
        nu = st.e + C @ ref
        if result.monitor is not None:
            w = analysis.evaluate_W(st, result.monitor)
        else:
            w = float("nan")
        ev = None
        if s.j in event_by_j and s.j not in seen_j:
            ev = event_by_j[s.j]
            seen_j.add(s.j)
        mask = sum(1 << i for i in ev.sensors) if ev is not None else 0
        row = [_fmt(s.t), str(s.j)]
        row += [_fmt(v) for v in st.x]
        if st.xhat is not None:
            row += [_fmt(v) for v in st.xhat]
        row += [_fmt(v) for v in st.e]
        row += [_fmt(v) for v in st.tau]
        row += [_fmt(v) for v in nu]
        row += [_fmt(w), _fmt(distance_to_target(st)),
                "1" if ev is not None else "0", str(mask)]
        rows.append(row)
    return rows


def write_trace(result: RunResult, out_dir, fmt="csv"):
    os.makedirs(out_dir, exist_ok=True)
    header = _trace_header(result.exp)
    rows = trace_rows(result)
    if fmt == "csv":
        path = os.path.join(out_dir, "trace.csv")
        with open(path, "w", newline="\n") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(row) + "\n")
    else:
        path = os.path.join(out_dir, "trace.json")
        with open(path, "w") as fh:
            json.dump({"columns": header, "rows": rows}, fh, indent=1)
            fh.write("\n")
    return path


def write_summary(result: RunResult, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "summary.json")
    with open(path, "w") as fh:
        json.dump(result.summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def write_plot_data(result: RunResult, out_dir):
    """Per-signal (t, value) series plus a gnuplot layout hint."""
    plot_dir = os.path.join(out_dir, "plots")
    os.makedirs(plot_dir, exist_ok=True)
    header = _trace_header(result.exp)
    rows = trace_rows(result)
    signals = [c for c in header if c not in ("t", "j", "event", "sensors")]
    paths = []
    for name in signals:
        idx = header.index(name)
        path = os.path.join(plot_dir, f"{name}.dat")
        with open(path, "w", newline="\n") as fh:
            for row in rows:
                fh.write(f"{row[0]} {row[idx]}\n")
        paths.append(path)
    hint = os.path.join(plot_dir, "layout.gp")
    with open(hint, "w", newline="\n") as fh:
        fh.write("# gnuplot layout hint: one series per file, columns t value\n")
        for name in signals:
            fh.write(f'plot "{name}.dat" using 1:2 with lines title "{name}"\n')
    return paths + [hint]


def cmd_run(cfg: ExperimentConfig, out_dir=None, seed=None, fmt="csv"):
    """Run one experiment and write trace, summary, and plot data."""
    result = run_experiment(cfg, seed=seed)
    out = out_dir or cfg.outputs.get("dir", "out")
    formats = cfg.outputs.get("formats", ["csv", "json"])
    trace_fmt = fmt if fmt in ("csv", "json") else "csv"
    write_trace(result, out, trace_fmt)
    if "json" in formats or trace_fmt == "json":
        pass  # summary below is always JSON
    write_summary(result, out)
    write_plot_data(result, out)
    return result


def cmd_compare(cfgs, labels=None, seed=None):
    """Run several experiments and tabulate counts, decay fits, distances."""
    labels = labels or [f"run{i}" for i in range(len(cfgs))]
    results = [run_experiment(c, seed=seed) for c in cfgs]
    radius = min(r.exp.sim.convergence_radius for r in results)
    rows = analysis.compare_runs(
        [(lab, r.arc) for lab, r in zip(labels, results)], radius)
    return rows, results


def _format_compare_table(rows):
    cols = ["label", "transmissions", "apparent", "decay_gamma", "decay_r2",
            "final_distance", "t_final", "j_final", "converged"]
    lines = ["\t".join(cols)]
    for row in rows:
        cells = []
        for c in cols:
            v = row[c]
            if isinstance(v, float):
                cells.append(f"{v:.6g}")
            else:
                cells.append(str(v))
        lines.append("\t".join(cells))
    return "\n".join(lines)


def _design_report(exp: Experiment):
    pol = exp.policy
    if isinstance(pol, SyncPolicy):
        return {"kind": "sync", "P1": pol.P1.tolist(),
                "P2": pol.P2.tolist(), "gamma_x": pol.gamma_x,
                "gamma_e": pol.gamma_e,
                "delta": pol.timer.delta, "rho": pol.timer.rho}
    if isinstance(pol, AsyncPolicy):
        return {"kind": "async", "P1": pol.P1.tolist(), "p": pol.p.tolist(),
                "alpha": pol.alpha.tolist(), "epsilon": pol.epsilon,
                "a": pol.a, "b": pol.b, "c": pol.c,
                "delta": pol.timer.delta, "rho": pol.timer.rho}
    return {"kind": "tabuada", "sigma": pol.sigma,
            "alpha_rate": pol.alpha_rate, "gamma_gain": pol.gamma_gain,
            "delta": pol.timer.delta, "rho": pol.timer.rho}


def _load_from_args(args):
    if getattr(args, "preset", None):
        return preset_config(args.preset)
    if getattr(args, "config", None):
        return load_config(args.config)
    raise ParseError("either --config or --preset is required")


def _resolve_item(item):
    """compare items: an existing file path, else a preset name."""
    if os.path.exists(item):
        return load_config(item), os.path.basename(item)
    return preset_config(item), item


def build_parser():
    parser = argparse.ArgumentParser(
        prog="lazylink",
        description="Event-triggered transmission simulator for linear "
                    "closed loops")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_source(p):
        p.add_argument("--config", help="path to a JSON experiment config")
        p.add_argument("--preset", help="name of a built-in preset")

    p_check = sub.add_parser("check", help="validate a configuration")
    add_source(p_check)

    p_design = sub.add_parser("design", help="design and print the policy")
    add_source(p_design)

    p_run = sub.add_parser("run", help="simulate and write artifacts")
    add_source(p_run)
    p_run.add_argument("--out", help="output directory (overrides config)")
    p_run.add_argument("--seed", type=int, help="perturbation seed override")
    p_run.add_argument("--format", choices=["csv", "json"], default="csv",
                       help="trace file format")

    p_cmp = sub.add_parser("compare", help="run several configs side by side")
    p_cmp.add_argument("items", nargs="+",
                       help="config paths or preset names")
    p_cmp.add_argument("--out", help="directory for compare.json")
    p_cmp.add_argument("--seed", type=int)

    p_presets = sub.add_parser("presets", help="list or print presets")
    p_presets.add_argument("--preset", help="print this preset's config")
    return parser


def main(argv=None):
    logging.basicConfig(
        level=os.environ.get("LAZYLINK_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "presets":
            if args.preset:
                cfg = preset_config(args.preset)
                print(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
            else:
                for name in sorted(presets()):
                    print(name)
            return 0

        if args.command == "check":
            cfg = _load_from_args(args)
            ok, report = cmd_check(cfg)
            for r in report:
                status = "PASS" if r["passed"] else "FAIL"
                detail = f" ({r['detail']})" if r["detail"] else ""
                print(f"{status} {r['condition']}{detail}")
            return 0 if ok else 1

        if args.command == "design":
            cfg = _load_from_args(args)
            exp = build_experiment(cfg)
            print(json.dumps(_design_report(exp), indent=2, sort_keys=True))
            return 0

        if args.command == "run":
            cfg = _load_from_args(args)
            result = cmd_run(cfg, out_dir=args.out, seed=args.seed,
                             fmt=args.format)
            out = args.out or cfg.outputs.get("dir", "out")
            print(json.dumps({
                "out_dir": out,
                "converged": result.summary["converged"],
                "budget_exceeded": result.summary["budget_exceeded"],
                "transmissions": result.summary["transmissions"]["total"],
            }, indent=2))
            return 0

        if args.command == "compare":
            pairs = [_resolve_item(item) for item in args.items]
            cfgs = [c for c, _ in pairs]
            labels = [lab for _, lab in pairs]
            rows, _ = cmd_compare(cfgs, labels, seed=args.seed)
            print(_format_compare_table(rows))
            if args.out:
                os.makedirs(args.out, exist_ok=True)
                with open(os.path.join(args.out, "compare.json"), "w") as fh:
                    json.dump(rows, fh, indent=2, sort_keys=True)
                    fh.write("\n")
            return 0
    except (ParseError, DesignInfeasible, NotStabilized, ValueError) as exc:
        log.error("validation failure: %s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (NonFiniteState, OSError) as exc:
        log.error("runtime failure: %s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    parser.error(f"unknown command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
