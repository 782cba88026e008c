"""Command line entry point: ``stmpc {sets,simulate,montecarlo,compare-init}``.

Exit codes
----------
0  success
2  usage error (bad flags)
3  configuration error (message names the offending field)
4  a tightened constraint set came out empty
5  a simulated run became infeasible
6  the QP solver failed
7  any other design-stage failure (unstable loop, no convergence, ...)

Metrics JSON files contain no timing information, so repeated runs with the
same configuration and seed produce byte-identical files whatever the
worker count (``STMPC_THREADS``).  Wall times go to ``timing.json``.
"""

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .controller import INIT_CASES, VARIANTS
from .exceptions import ConfigError, EmptyTightening, StmpcError
from .sets import zonotope_to_hpoly
from .simulation import monte_carlo, run_closed_loop
from .tightening import check_axioms

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_EMPTY, EXIT_INFEASIBLE, EXIT_SOLVER, EXIT_DESIGN = 0, 2, 3, 4, 5, 6, 7

log = logging.getLogger("stmpc")


def _u64(text):
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def _variants(text):
    if text.strip().lower() == "all":
        return list(VARIANTS)
    names = [v.strip() for v in text.split(",") if v.strip()]
    bad = [v for v in names if v not in VARIANTS]
    if bad or not names:
        raise argparse.ArgumentTypeError(f"unknown variant(s) {bad}; choose from {list(VARIANTS)} or 'all'")
    return names


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", metavar="PATH", help="experiment configuration (JSON)")
    src.add_argument("--paper-example", action="store_true", help="use the built-in two-state benchmark")
    common.add_argument("--out", metavar="DIR", default=".", help="output directory (default: .)")
    common.add_argument("--seed", type=_u64, metavar="U64", help="override sim.seed")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="stmpc", description="Probabilistic tube-based stochastic MPC experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("sets", parents=[common], help="compute tubes, tightened sets and terminal set")

    p = sub.add_parser("simulate", parents=[common], help="closed-loop trajectories with tube cross-sections")
    p.add_argument("--runs", type=_positive, default=1, metavar="N", help="number of runs (default: 1)")
    p.add_argument("--variants", type=_variants, metavar="LIST", help="single variant to simulate (default: from config)")

    p = sub.add_parser("montecarlo", parents=[common], help="violation statistics per variant")
    p.add_argument("--runs", type=_positive, metavar="N", help="override sim.N_s")
    p.add_argument("--variants", type=_variants, default=list(VARIANTS), metavar="LIST",
                   help="comma separated list or 'all' (default: all)")

    p = sub.add_parser("compare-init", parents=[common], help="compare the four nominal initializations")
    p.add_argument("--runs", type=_positive, metavar="N", help="override sim.N_s")
    p.add_argument("--variants", type=_variants, metavar="LIST", help="variant to use (default: from config)")
    return parser


# --------------------------------------------------------------------- output
def _write_json(path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if v is None or (isinstance(v, float) and np.isnan(v)):
        return ""
    return repr(float(v))


def trajectory_header(n, m):
    xs = [f"x{i + 1}" for i in range(n)]
    us = ["u"] if m == 1 else [f"u{j + 1}" for j in range(m)]
    return ["run_id", "t", *xs, *us, "lambda", "feasible", "x_viol", "u_viol", "in_Z"]


def trajectory_rows(rec):
    """One row per state ``x_0 .. x_{N_sim}``; the last row has no input."""
    N_sim = len(rec.feasible)
    m = rec.u.shape[1]
    for t in range(N_sim + 1):
        reached = t == 0 or rec.feasible[t - 1]
        if not reached:
            break
        step = t < N_sim
        u = rec.u[t] if step else [None] * m
        yield [
            rec.run_id, t, *map(_fmt, rec.x[t]), *map(_fmt, u),
            _fmt(rec.lam[t]) if step else "",
            _fmt(rec.feasible[t]) if step else 1,
            _fmt(rec.x_viol[t]),
            _fmt(rec.u_viol[t]) if step else "",
            _fmt(rec.in_Z[t]) if step else "",
        ]


def _tube_polygons(ctrl, rec):
    """Rows ``run_id, t, vertex, x1, x2`` of ``s0 + lam * tube`` (2-D systems)."""
    cache = {}
    rows = []
    for t in np.flatnonzero(rec.feasible):
        Z = ctrl.init_tube(int(t))
        key = id(Z)
        if key not in cache:
            cache[key] = zonotope_to_hpoly(Z).vertices() if np.any(Z.G) else np.zeros((1, Z.dim))
        for k, v in enumerate(cache[key]):
            p = rec.s0[t] + rec.lam[t] * v
            rows.append([rec.run_id, int(t), k, _fmt(p[0]), _fmt(p[1])])
    return rows


def format_table(title, rows, columns):
    width = max([len(name) for name, _ in rows] + [8]) + 2
    head = " " * width + "".join(f"{c:>12}" for c in columns)
    lines = [title, head, "-" * len(head)]
    for name, vals in rows:
        cells = "".join(f"{v:>12.2f}" if isinstance(v, float) else f"{v!s:>12}" for v in vals)
        lines.append(f"{name:<{width}}{cells}")
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------------- commands
def _load(args):
    cfg = ExperimentConfig.paper_example() if args.paper_example else ExperimentConfig.load(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return cfg, out


def _single_variant(args, cfg):
    if args.variants:
        if len(args.variants) != 1:
            raise argparse.ArgumentTypeError("this command takes a single variant")
        return args.variants[0]
    return cfg.data["controller"]["variant"]


def cmd_sets(args):
    cfg, out = _load(args)
    ctrl = cfg.fitted_controller()
    tubes, tight, syn = ctrl.tubes_, ctrl.tightened_, ctrl.synthesis_
    report = check_axioms(tight.Xf, syn, tight.Cbar, tight.Vbar, ctrl.weights_)
    payload = {
        "config": cfg.to_dict(),
        "synthesis": {"K": syn.K.tolist(), "P": syn.P.tolist(), "rho": syn.rho},
        "kmax": tubes.kmax,
        "mrpi": {"s": tubes.mrpi_s, "alpha": tubes.mrpi_alpha},
        "axioms": report,
        "tubes": tubes.to_dict(),
        "tightened": tight.to_dict(),
    }
    _write_json(out / "sets.json", payload)
    print(f"kmax={tubes.kmax} mrpi_s={tubes.mrpi_s} mrpi_alpha={tubes.mrpi_alpha:.3e} "
          f"Xf_facets={tight.Xf.n_facets} axioms={'pass' if report['passed'] else 'FAIL'}")
    return EXIT_OK


def cmd_simulate(args):
    cfg, out = _load(args)
    variant = _single_variant(args, cfg)
    ctrl = cfg.fitted_controller(variant=variant)
    sim = cfg.sim_config(seed=args.seed, runs=args.runs)
    n, m = ctrl.system_.n, ctrl.system_.m
    records = [run_closed_loop(ctrl, sim, i) for i in range(sim.N_s)]
    _write_csv(out / "trajectory.csv", trajectory_header(n, m),
               [row for rec in records for row in trajectory_rows(rec)])
    nominal = [[r.run_id, t, *map(_fmt, r.s0[t])] for r in records for t in np.flatnonzero(r.feasible)]
    _write_csv(out / "nominal.csv", ["run_id", "t", *[f"s{i + 1}" for i in range(n)]], nominal)
    if n == 2:
        _write_csv(out / "tubes.csv", ["run_id", "t", "vertex", "x1", "x2"],
                   [row for rec in records for row in _tube_polygons(ctrl, rec)])
    statuses = {r.status for r in records}
    print(f"{variant}: {len(records)} run(s), statuses={sorted(statuses)}")
    if "solver-error" in statuses:
        return EXIT_SOLVER
    if "infeasible" in statuses:
        return EXIT_INFEASIBLE
    return EXIT_OK


def _violation_rows(label, metrics):
    return [[label, t, _fmt(r)] for t, r in enumerate(metrics.r_v, start=1)]


def _run_batch(cfg, sim, jobs):
    """``jobs``: list of (label, variant, init_mode).  Returns metrics dicts, tables rows, timing."""
    metrics, timing, violations = {}, {}, []
    for label, variant, mode in jobs:
        t0 = time.perf_counter()
        ctrl = cfg.fitted_controller(variant=variant, init_mode=mode)
        m, _ = monte_carlo(ctrl, sim)
        timing[label] = time.perf_counter() - t0
        metrics[label] = m
        violations += _violation_rows(label, m)
        log.info("%s done in %.1f s", label, timing[label])
    return metrics, timing, violations


def _summary(sim, metrics):
    return {
        "sim": {"N_sim": sim.N_sim, "N_s": sim.N_s, "seed": sim.seed, "x0": list(sim.x0),
                "avg_window": sim.avg_window},
        "results": {k: m.to_dict() for k, m in metrics.items()},
    }


def _exit_for(metrics):
    if any(m.n_solver_errors for m in metrics.values()):
        return EXIT_SOLVER
    return EXIT_OK


def cmd_montecarlo(args):
    cfg, out = _load(args)
    sim = cfg.sim_config(seed=args.seed, runs=args.runs)
    mode = cfg.data["controller"]["init_mode"]
    metrics, timing, viol = _run_batch(cfg, sim, [(v, v, mode) for v in args.variants])
    _write_json(out / "metrics.json", _summary(sim, metrics))
    _write_json(out / "timing.json", {k: round(v, 3) for k, v in timing.items()})
    _write_csv(out / "violations.csv", ["variant", "t", "r_v"], viol)
    t1 = format_table(f"Feasibility ratio (N_s = {sim.N_s})",
                      [(k, (m.r_f, timing[k])) for k, m in metrics.items()], ["r_f [%]", "time [s]"])
    t2 = format_table(f"Violation ratios (N_s = {sim.N_s})",
                      [(k, (m.r_bar, m.r_max, m.r_min, timing[k])) for k, m in metrics.items()],
                      ["r_bar [%]", "r_max [%]", "r_min [%]", "time [s]"])
    (out / "tables.txt").write_text(t1 + "\n" + t2, encoding="utf-8")
    print(t1 + "\n" + t2, end="")
    return _exit_for(metrics)


def cmd_compare_init(args):
    cfg, out = _load(args)
    variant = _single_variant(args, cfg)
    sim = cfg.sim_config(seed=args.seed, runs=args.runs)
    jobs = [(case, variant, mode) for case, mode in INIT_CASES.items()]
    metrics, timing, viol = _run_batch(cfg, sim, jobs)
    summary = _summary(sim, metrics)
    summary["variant"] = variant
    summary["init_modes"] = dict(INIT_CASES)
    _write_json(out / "compare_init.json", summary)
    _write_json(out / "timing_init.json", {k: round(v, 3) for k, v in timing.items()})
    _write_csv(out / "violations_init.csv", ["case", "t", "r_v"], viol)
    t3 = format_table(f"Initialization comparison, {variant} (N_s = {sim.N_s})",
                      [(f"{k} ({INIT_CASES[k]})", (m.r_bar, m.r_max, m.r_min, timing[k])) for k, m in metrics.items()],
                      ["r_bar [%]", "r_max [%]", "r_min [%]", "time [s]"])
    (out / "table_init.txt").write_text(t3, encoding="utf-8")
    print(t3, end="")
    return _exit_for(metrics)


COMMANDS = {"sets": cmd_sets, "simulate": cmd_simulate, "montecarlo": cmd_montecarlo, "compare-init": cmd_compare_init}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except argparse.ArgumentTypeError as exc:
        parser.print_usage(sys.stderr)
        print(f"stmpc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"stmpc: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EmptyTightening as exc:
        print(f"stmpc: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    except StmpcError as exc:
        print(f"stmpc: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DESIGN


if __name__ == "__main__":
    sys.exit(main())
