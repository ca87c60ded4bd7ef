"""Command-line entry point: ``esavg {simulate,average,verify,sweep,bound}``.

Exit codes: 0 ok, 1 verification failure, 2 usage or config error, 3 IO error.
"""

from __future__ import annotations

import argparse
import itertools
import json
import os
import sys
from typing import Optional

import numpy as np

from .averaging import AveragingContext, average_field
from .core import AssumptionError
from .presets import PRESETS, ConfigError, ExperimentConfig, build, load_config, preset
from .rng import sphere_points
from .sim import averaging_order_sweep, estimate_ultimate_bound, integrate, integrate_batch
from .verify import SUITES, run_suite

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _resolve_config(args) -> ExperimentConfig:
    if args.config and args.preset:
        raise UsageError("give either --config or --preset, not both")
    if args.config:
        try:
            cfg = load_config(args.config)
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from exc
    elif args.preset:
        cfg = preset(args.preset, desk_scale=args.desk_scale)
    else:
        raise UsageError(f"need --config or --preset (presets: {', '.join(PRESETS)})")
    if args.out:
        cfg.output_dir = args.out
    if args.seed is not None:
        cfg.sim["seed"] = args.seed
    if args.eps is not None:
        cfg.sim["epsilon"] = args.eps
    return cfg


def _out_dir(cfg: ExperimentConfig) -> str:
    path = cfg.output_dir
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise OSError(f"output directory {path!r} is not writable: {exc}") from exc
    if not os.access(path, os.W_OK):
        raise OSError(f"output directory {path!r} is not writable")
    return path


def _write_json(path: str, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def cmd_simulate(cfg: ExperimentConfig) -> int:
    """One trajectory from ``sim.x0``, or ``n_runs`` from the sphere of radius ``radius0``."""
    built = build(cfg)
    sc = cfg.sim_config()
    out = _out_dir(cfg)
    if cfg.n_runs > 1 and cfg.radius0:
        trajs = integrate_batch(built.system, sphere_points(sc.seed, cfg.n_runs, built.system.dim, cfg.radius0), sc)
        names = [f"trajectory_{i:03d}.csv" for i in range(len(trajs))]
    else:
        trajs = [integrate(built.system, sc)]
        names = ["trajectory.csv"]
    runs = []
    for name, tr in zip(names, trajs):
        tr.to_csv(os.path.join(out, name))
        runs.append({"file": name, "final_state": tr.final.tolist(), "final_time": float(tr.times[-1]),
                     "min_norm": float(tr.norms().min()), "escaped": tr.escaped})
    summary = {"experiment": cfg.experiment, "epsilon": sc.epsilon, "seed": int(sc.seed),
               "x_star": None if built.x_star is None else built.x_star.tolist(), "runs": runs}
    _write_json(os.path.join(out, "summary.json"), summary)
    print(json.dumps({"experiment": cfg.experiment, "runs": len(runs),
                      "escaped": sum(r["escaped"] for r in runs)}))
    return EXIT_OK


def parse_grid(specs: Optional[list], points: Optional[list], dim: int) -> np.ndarray:
    """Grid from ``lo:hi:step`` specs (one per axis, or one for all) or explicit ``a,b,..`` points."""
    if points:
        pts = np.array([[float(v) for v in p.split(",")] for p in points])
        if pts.shape[1] != dim:
            raise UsageError(f"points must have {dim} coordinates")
        return pts
    if not specs:
        raise UsageError("grid is empty")
    axes = []
    for spec in specs:
        lo, hi, step = (spec if isinstance(spec, (list, tuple)) else [float(v) for v in spec.split(":")])
        if step <= 0 or hi < lo:
            raise UsageError(f"bad grid axis {spec!r}")
        axes.append(lo + step * np.arange(int(np.floor((hi - lo) / step + 1e-9)) + 1))
    if len(axes) == 1:
        axes = axes * dim
    if len(axes) != dim:
        raise UsageError(f"grid has {len(axes)} axes, system is {dim}-D")
    return np.array(list(itertools.product(*axes)))


def cmd_average(cfg: ExperimentConfig, grid=None, points=None) -> int:
    """CSV of the quadrature average over a grid: columns ``x1..xn, fbar1..fbarn``."""
    built = build(cfg)
    pts = parse_grid(grid or cfg.grid, points, built.system.dim)
    ctx = AveragingContext(built.system, cfg.deltas_obj())
    vals = np.array([average_field(ctx, p) for p in pts])
    n = built.system.dim
    out = _out_dir(cfg)
    header = ",".join([f"x{i + 1}" for i in range(n)] + [f"fbar{i + 1}" for i in range(n)])
    path = os.path.join(out, "average.csv")
    np.savetxt(path, np.column_stack([pts, vals]), fmt="%.17g", delimiter=",", header=header, comments="")
    print(json.dumps({"experiment": cfg.experiment, "points": len(pts), "file": path}))
    return EXIT_OK


def cmd_verify(suite: str, out: Optional[str] = None) -> int:
    report = run_suite(suite)
    text = json.dumps(report, indent=2)
    if out:
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, f"verify_{suite}.json"), "w") as fh:
            fh.write(text + "\n")
    print(text)
    return EXIT_OK if report["passed"] else EXIT_VERIFY


def cmd_sweep(cfg: ExperimentConfig, eps_list: Optional[list] = None) -> int:
    built = build(cfg)
    sw = dict(cfg.sweep or {})
    sw.setdefault("x0", cfg.sim["x0"])
    sw.setdefault("t_final", cfg.sim["t_final"])
    if eps_list:
        sw["eps_list"] = eps_list
    if "eps_list" not in sw:
        raise UsageError("sweep needs an epsilon list (--eps-list or config sweep.eps_list)")
    rep = averaging_order_sweep(built.system, sw["x0"], sw["t_final"], sw["eps_list"], fbar=built.fbar_closed,
                                deltas=cfg.deltas_obj(),
                                steps_per_fast_period=cfg.sim.get("steps_per_fast_period", 200))
    rep["experiment"] = cfg.experiment
    _write_json(os.path.join(_out_dir(cfg), "sweep.json"), rep)
    print(json.dumps(rep))
    return EXIT_OK if rep["passed"] else EXIT_VERIFY


def cmd_bound(cfg: ExperimentConfig) -> int:
    built = build(cfg)
    if not cfg.radius0:
        raise UsageError("bound needs radius0 in the config")
    est = estimate_ultimate_bound(built.system, cfg.n_runs, cfg.radius0, cfg.sim_config())
    path = os.path.join(_out_dir(cfg), "bound.json")
    with open(path, "w") as fh:
        fh.write(est.to_json() + "\n")
    print(est.to_json())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="experiment config JSON")
    common.add_argument("--preset", metavar="NAME", help=f"named experiment: {', '.join(PRESETS)}")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides config)")
    common.add_argument("--seed", type=int, metavar="U64", help="override the seed")
    common.add_argument("--eps", type=float, metavar="FLOAT", help="override epsilon")
    common.add_argument("--desk-scale", action="store_true", help="move an ES minimiser to the origin")

    p = argparse.ArgumentParser(prog="esavg", description="Second-order averaging and extremum seeking experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="integrate a preset or config")
    a = sub.add_parser("average", parents=[common], help="tabulate the averaged field on a grid")
    a.add_argument("--grid", action="append", metavar="LO:HI:STEP", help="grid axis; repeat per dimension")
    a.add_argument("--point", action="append", metavar="X1,X2,..", help="explicit grid point; repeatable")
    v = sub.add_parser("verify", help="run a verification suite")
    v.add_argument("suite", help=f"one of {', '.join(SUITES + ('all',))}")
    v.add_argument("--out", metavar="DIR", help="also write the JSON report here")
    s = sub.add_parser("sweep", parents=[common], help="epsilon-halving order sweep")
    s.add_argument("--eps-list", type=float, nargs="+", metavar="EPS")
    sub.add_parser("bound", parents=[common], help="empirical ultimate bound over seeded runs")
    return p


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "verify":
            if args.suite not in SUITES + ("all",):
                raise UsageError(f"unknown suite {args.suite!r}; expected one of {', '.join(SUITES + ('all',))}")
            return cmd_verify(args.suite, args.out)
        cfg = _resolve_config(args)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "average":
            return cmd_average(cfg, args.grid, args.point)
        if args.command == "sweep":
            return cmd_sweep(cfg, args.eps_list)
        return cmd_bound(cfg)
    except (UsageError, ConfigError, AssumptionError, ValueError, TypeError, KeyError) as exc:
        print(f"esavg: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"esavg: io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
