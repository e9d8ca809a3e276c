"""Command-line frontend: dataset prep, full-model score export, single
training runs, grid sweeps with validation-side frontier selection, and CSV
reports.

Exit codes: 0 success, 1 usage error, 2 data error, 3 solver
non-convergence in single-run mode.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib.metadata import version as _pkg_version
from pathlib import Path

import numpy as np

from .baselines import confidence_gate, greedy_l1_pipeline, uniform_gate
from .data import CostVector, DataError, Dataset, SplitSpec, gen_synthetic, load_costs, load_csv, split
from .losses import F0Scores
from .trees import fit_plain_gbrt, load_ensemble, save_ensemble
from .training import (
    AdaptiveSystem,
    TradeoffPoint,
    TrainConfig,
    evaluate,
    load_system,
    save_system,
    train_dynamod_gbrt,
    train_dynamod_lin,
    train_dynamod_lstsq,
)

SWEEP_COLUMNS = ["algorithm", "gamma", "p_full", "lr", "seed", "split",
                 "accuracy", "avg_cost", "frac_to_f0", "objective", "converged"]


class UsageError(Exception):
    pass


class SolverNotConverged(Exception):
    pass


@dataclass
class SweepConfig:
    """Grid sweep request: algorithm, parameter grids, budget, and paths."""

    algorithm: str
    gamma_grid: list[float]
    p_full_grid: list[float]
    lr_grid: list[float]
    seed: int
    out_dir: Path
    budget: float | None = None
    jobs: int = 1
    train_cfg: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.algorithm not in ("lin", "gbrt", "lstsq", "greedy", "confidence", "uniform"):
            raise UsageError(f"unknown algorithm '{self.algorithm}'")
        if not self.gamma_grid or not self.p_full_grid or not self.lr_grid:
            raise UsageError("parameter grids must be nonempty")
        if self.budget is not None and self.budget <= 0:
            raise UsageError("budget must be positive")


def pareto_frontier(points: list[TradeoffPoint]) -> list[TradeoffPoint]:
    """Non-dominated subset (maximize accuracy, minimize cost), cost-ascending.

    A point survives iff no other point is at least as good on both axes and
    strictly better on one; exact duplicates all survive, in input order.
    """
    if not points:
        raise ValueError("pareto_frontier requires at least one point")
    acc = np.array([p.accuracy for p in points])
    cost = np.array([p.avg_cost for p in points])
    dominated = np.zeros(len(points), dtype=bool)
    for i in range(len(points)):
        better_eq = (acc >= acc[i]) & (cost <= cost[i])
        strict = (acc > acc[i]) | (cost < cost[i])
        dominated[i] = bool(np.any(better_eq & strict))
    kept = [p for i, p in enumerate(points) if not dominated[i]]
    return sorted(kept, key=lambda p: (p.avg_cost, -p.accuracy))


# --- argument plumbing -------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"cannot parse float list '{text}'") from exc


def _build_parser() -> _Parser:
    parser = _Parser(prog="dynamod", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="write the 4-cluster synthetic train/val/test CSVs")
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--fractions", type=_float_list, default=[0.6, 0.2, 0.2])

    p_f0 = sub.add_parser("train-f0", help="train the internal full model and export its scores")
    p_f0.add_argument("--train", required=True)
    p_f0.add_argument("--val")
    p_f0.add_argument("--test")
    p_f0.add_argument("--out", required=True)
    p_f0.add_argument("--label-column", default="label")
    p_f0.add_argument("--n-trees", type=int, default=100)
    p_f0.add_argument("--depth", type=int, default=4)
    p_f0.add_argument("--lr", type=float, default=0.5)
    p_f0.add_argument("--seed", type=int, default=0)

    def add_common(p):
        p.add_argument("--train", required=True)
        p.add_argument("--label-column", default="label")
        p.add_argument("--costs")
        p.add_argument("--f0-scores-train", required=True)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--max-outer", type=int)
        p.add_argument("--tol", type=float, default=1e-5)
        p.add_argument("--trees", type=int, default=100)
        p.add_argument("--depth", type=int, default=4)

    p_train = sub.add_parser("train", help="train one system at fixed parameters")
    add_common(p_train)
    p_train.add_argument("--algorithm", required=True, choices=["lin", "gbrt", "lstsq"])
    p_train.add_argument("--gamma", type=float, default=0.01)
    p_train.add_argument("--p-full", type=float, default=0.5)
    p_train.add_argument("--lr", type=float, default=0.1)
    p_train.add_argument("--out", required=True)

    p_sweep = sub.add_parser("sweep", help="grid sweep with validation-side frontier selection")
    add_common(p_sweep)
    p_sweep.add_argument("--algorithm", required=True,
                         choices=["lin", "gbrt", "lstsq", "greedy", "confidence", "uniform"])
    p_sweep.add_argument("--val", required=True)
    p_sweep.add_argument("--test", required=True)
    p_sweep.add_argument("--f0-scores-val", required=True)
    p_sweep.add_argument("--f0-scores-test", required=True)
    p_sweep.add_argument("--gamma-min", type=float, default=1e-4)
    p_sweep.add_argument("--gamma-max", type=float, default=1.0)
    p_sweep.add_argument("--gamma-points", type=int, default=20)
    p_sweep.add_argument("--p-full-min", type=float, default=0.1)
    p_sweep.add_argument("--p-full-max", type=float, default=0.9)
    p_sweep.add_argument("--p-full-points", type=int, default=9)
    p_sweep.add_argument("--lr-grid", type=_float_list, default=[0.1])
    p_sweep.add_argument("--budget", type=float)
    p_sweep.add_argument("--jobs", type=int, default=1)
    p_sweep.add_argument("--f1-trees", type=int, default=10,
                         help="cheap-model size for the confidence/uniform baselines")
    p_sweep.add_argument("--out", required=True)

    p_eval = sub.add_parser("eval", help="evaluate a saved system on a dataset")
    p_eval.add_argument("--system", required=True)
    p_eval.add_argument("--data", required=True)
    p_eval.add_argument("--f0-scores", required=True)
    p_eval.add_argument("--label-column", default="label")
    p_eval.add_argument("--out")

    p_front = sub.add_parser("frontier", help="recompute the frontier from a sweep CSV")
    p_front.add_argument("--sweep", required=True)
    p_front.add_argument("--out", required=True)
    p_front.add_argument("--split", default="val")

    return parser


def _inject_config(argv: list[str]) -> list[str]:
    """Splice INI key/value pairs in as flags, before (so below) explicit flags."""
    if "--config" not in argv:
        return argv
    idx = argv.index("--config")
    if idx + 1 >= len(argv):
        raise UsageError("--config requires a path")
    path = Path(argv[idx + 1])
    rest = argv[:idx] + argv[idx + 2:]
    if not path.exists():
        raise DataError(f"config file not found: {path}")
    ini = configparser.ConfigParser()
    ini.read(path)
    if "dynamod" not in ini:
        raise DataError(f"{path}: missing [dynamod] section")
    injected: list[str] = []
    for key, value in ini["dynamod"].items():
        injected.extend([f"--{key}", value])
    if not rest:
        return injected
    return rest[:1] + injected + rest[1:]


# --- commands ----------------------------------------------------------------

def cmd_synth(args) -> int:
    out = Path(args.out)
    if out.exists() and not out.is_dir():
        raise DataError(f"output path exists and is not a directory: {out}")
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output directory {out}: {exc}") from exc
    ds = gen_synthetic(args.seed)
    parts = split(ds, SplitSpec(tuple(args.fractions), seed=args.seed))
    for name, part in zip(("train", "val", "test"), parts):
        part.to_csv(out / f"{name}.csv")
    print(f"synth: wrote {[p.n for p in parts]} rows to {out}")
    return 0


def cmd_train_f0(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    train = load_csv(args.train, args.label_column)
    ensemble, train_scores = fit_plain_gbrt(train.X, train.y, args.n_trees, args.depth, args.lr)
    save_ensemble(ensemble, out / "f0_model.json")
    train_scores.save(out / "f0_train.csv")
    train_acc = float(np.mean(np.where(ensemble.scores(train.X) >= 0, 1.0, -1.0) == train.y))
    print(f"train-f0: training accuracy={train_acc:.4f} trees={args.n_trees}")
    for name, path in (("val", args.val), ("test", args.test)):
        if path is None:
            continue
        ds = load_csv(path, args.label_column)
        scores = F0Scores.from_margins(ensemble.scores(ds.X), ds.y, source="trained")
        scores.save(out / f"f0_{name}.csv")
    return 0


def _train_one(algorithm: str, train: Dataset, f0: F0Scores, costs: CostVector,
               cfg: TrainConfig) -> AdaptiveSystem:
    if algorithm == "lin":
        return train_dynamod_lin(train, f0, costs, cfg)
    if algorithm == "gbrt":
        return train_dynamod_gbrt(train, f0, costs, cfg)
    if algorithm == "lstsq":
        return train_dynamod_lstsq(train, f0, cfg, costs=costs)
    raise UsageError(f"cannot train algorithm '{algorithm}' directly")


def cmd_train(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    train = load_csv(args.train, args.label_column)
    costs = load_costs(args.costs, train.feature_names)
    f0 = F0Scores.load(args.f0_scores_train)
    cfg = TrainConfig(p_full=args.p_full, gamma=args.gamma, max_outer=args.max_outer,
                      tol=args.tol, seed=args.seed, n_rounds=args.trees,
                      tree_depth=args.depth, learning_rate=args.lr)
    sys_ = _train_one(args.algorithm, train, f0, costs, cfg)
    save_system(sys_, out / "system.json", f0_scores_path=args.f0_scores_train)
    point = evaluate(sys_, train, f0=f0)
    print(f"train: algorithm={args.algorithm} accuracy={point.accuracy:.4f} "
          f"avg_cost={point.avg_cost:.4f} frac_to_f0={point.frac_to_f0:.4f} "
          f"converged={sys_.meta.get('converged')}")
    if not sys_.meta.get("converged", True):
        raise SolverNotConverged(f"{args.algorithm} did not converge within the iteration cap")
    return 0


def _objective_of(sys_: AdaptiveSystem) -> float:
    trace = sys_.meta.get("objective_trace") or []
    if not trace:
        return math.nan
    last = trace[-1]
    return float(last[1] if isinstance(last, tuple) else last)


def _sweep_point(task) -> dict:
    """Train and validate one grid point; isolated so failures don't kill the sweep."""
    algorithm, gamma, p_full, lr, seed, train, val, costs, f0_train, f0_val, base_cfg = task
    row = {"algorithm": algorithm, "gamma": gamma, "p_full": p_full, "lr": lr, "seed": seed,
           "split": "val", "accuracy": math.nan, "avg_cost": math.nan,
           "frac_to_f0": math.nan, "objective": math.nan, "converged": False}
    try:
        cfg = TrainConfig(p_full=p_full, gamma=gamma, max_outer=base_cfg.max_outer,
                          tol=base_cfg.tol, seed=seed, n_rounds=base_cfg.n_rounds,
                          tree_depth=base_cfg.tree_depth,
                          learning_rate=lr if lr is not None else 0.1)
        sys_ = _train_one(algorithm, train, f0_train, costs, cfg)
        point = evaluate(sys_, val, f0=f0_val)
        row.update(accuracy=point.accuracy, avg_cost=point.avg_cost,
                   frac_to_f0=point.frac_to_f0, objective=_objective_of(sys_),
                   converged=bool(sys_.meta.get("converged", True)))
        return {"row": row, "system": sys_, "error": None}
    except Exception as exc:  # isolate per-point failures
        return {"row": row, "system": None, "error": f"{type(exc).__name__}: {exc}"}


def _baseline_points(args, train, val, costs, f0_train, f0_val, p_grid, seed):
    """Systems for the greedy/confidence/uniform comparators plus sweep rows."""
    results = []
    if args.algorithm == "greedy":
        systems = greedy_l1_pipeline(train, val, f0_train, costs)
        for sys_ in systems:
            point = evaluate(sys_, val, f0=f0_val)
            row = {"algorithm": "greedy", "gamma": "", "p_full": "", "lr": "", "seed": seed,
                   "split": "val", "accuracy": point.accuracy, "avg_cost": point.avg_cost,
                   "frac_to_f0": point.frac_to_f0, "objective": math.nan, "converged": True}
            results.append({"row": row, "system": sys_, "error": None})
        return results

    f1_ens, _ = fit_plain_gbrt(train.X, train.y, args.f1_trees, args.depth, 0.5)
    if args.algorithm == "confidence":
        margins = np.abs(f1_ens.scores(val.X))
        for p in p_grid:
            tau = float(np.quantile(margins, p))
            sys_ = confidence_gate(f1_ens, tau, costs, f0=f0_train)
            point = evaluate(sys_, val, f0=f0_val)
            row = {"algorithm": "confidence", "gamma": "", "p_full": p, "lr": "", "seed": seed,
                   "split": "val", "accuracy": point.accuracy, "avg_cost": point.avg_cost,
                   "frac_to_f0": point.frac_to_f0, "objective": math.nan, "converged": True}
            results.append({"row": row, "system": sys_, "error": None})
        return results

    for p in p_grid:
        sys_ = uniform_gate(f1_ens, p, seed, costs, f0=f0_train)
        point = evaluate(sys_, val, f0=f0_val)
        row = {"algorithm": "uniform", "gamma": "", "p_full": p, "lr": "", "seed": seed,
               "split": "val", "accuracy": point.accuracy, "avg_cost": point.avg_cost,
               "frac_to_f0": point.frac_to_f0, "objective": math.nan, "converged": True}
        results.append({"row": row, "system": sys_, "error": None})
    return results


def cmd_sweep(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    train = load_csv(args.train, args.label_column)
    val = load_csv(args.val, args.label_column)
    test = load_csv(args.test, args.label_column)
    costs = load_costs(args.costs, train.feature_names)
    f0_train = F0Scores.load(args.f0_scores_train)
    f0_val = F0Scores.load(args.f0_scores_val)
    f0_test = F0Scores.load(args.f0_scores_test)

    gamma_grid = list(np.logspace(np.log10(args.gamma_min), np.log10(args.gamma_max),
                                  args.gamma_points))
    p_grid = list(np.linspace(args.p_full_min, args.p_full_max, args.p_full_points))
    sweep_cfg = SweepConfig(algorithm=args.algorithm, gamma_grid=gamma_grid,
                            p_full_grid=p_grid, lr_grid=args.lr_grid, seed=args.seed,
                            out_dir=out, budget=args.budget, jobs=args.jobs,
                            train_cfg=TrainConfig(max_outer=args.max_outer, tol=args.tol,
                                                  n_rounds=args.trees, tree_depth=args.depth))

    if args.algorithm in ("greedy", "confidence", "uniform"):
        results = _baseline_points(args, train, val, costs, f0_train, f0_val, p_grid, args.seed)
    else:
        if args.algorithm == "lin":
            grid = [(g, p, None) for g in gamma_grid for p in p_grid]
        elif args.algorithm == "gbrt":
            grid = [(g, p, lr) for g in gamma_grid for p in p_grid for lr in args.lr_grid]
        else:
            grid = [(0.0, p, None) for p in p_grid]
        tasks = [(args.algorithm, g, p, lr, args.seed, train, val, costs,
                  f0_train, f0_val, sweep_cfg.train_cfg) for g, p, lr in grid]
        if args.jobs > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                results = list(pool.map(_sweep_point, tasks))
        else:
            results = [_sweep_point(t) for t in tasks]

    for res in results:
        if res["error"]:
            print(f"sweep: point {res['row']['gamma']},{res['row']['p_full']} failed: {res['error']}",
                  file=sys.stderr)

    with open(out / "sweep.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        writer.writeheader()
        for res in results:
            writer.writerow(res["row"])

    ok = [res for res in results if res["system"] is not None and
          math.isfinite(res["row"]["accuracy"])]
    if not ok:
        print("sweep: no successful points; frontier not written", file=sys.stderr)
        return 0
    val_points = [TradeoffPoint(res["row"]["accuracy"], res["row"]["avg_cost"],
                                res["row"]["frac_to_f0"], params={"index": i})
                  for i, res in enumerate(ok)]
    frontier = pareto_frontier(val_points)
    with open(out / "frontier.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        writer.writeheader()
        for fp in frontier:
            res = ok[fp.params["index"]]
            test_point = evaluate(res["system"], test, f0=f0_test)
            row = dict(res["row"])
            row.update(split="test", accuracy=test_point.accuracy,
                       avg_cost=test_point.avg_cost, frac_to_f0=test_point.frac_to_f0)
            writer.writerow(row)

    if args.budget is not None:
        feasible = [res for res in ok if res["row"]["avg_cost"] <= args.budget]
        if feasible:
            best = max(feasible, key=lambda r: (r["row"]["accuracy"], -r["row"]["avg_cost"]))
            test_point = evaluate(best["system"], test, f0=f0_test)
            selected = {"budget": args.budget, "val": best["row"],
                        "test": {"accuracy": test_point.accuracy,
                                 "avg_cost": test_point.avg_cost,
                                 "frac_to_f0": test_point.frac_to_f0}}
        else:
            selected = {"budget": args.budget, "val": None, "test": None,
                        "note": "no point satisfies the budget on validation"}
        with open(out / "selected.json", "w") as fh:
            json.dump(selected, fh, indent=2)

    meta = {"tag": f"dynamod-{_pkg_version('dynamod')}", "argv": sys.argv[1:],
            "algorithm": args.algorithm, "seed": args.seed,
            "gamma_grid": gamma_grid, "p_full_grid": p_grid, "lr_grid": args.lr_grid}
    with open(out / "sweep_meta.json", "w") as fh:
        json.dump(meta, fh, indent=2)
    print(f"sweep: {len(results)} points, frontier size {len(frontier)}, wrote {out}")
    return 0


def cmd_eval(args) -> int:
    sys_ = load_system(args.system)
    data = load_csv(args.data, args.label_column)
    f0 = F0Scores.load(args.f0_scores)
    point = evaluate(sys_, data, f0=f0)
    print(f"eval: accuracy={point.accuracy:.4f} avg_cost={point.avg_cost:.4f} "
          f"frac_to_f0={point.frac_to_f0:.4f}")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["accuracy", "avg_cost", "frac_to_f0"])
            writer.writerow([point.accuracy, point.avg_cost, point.frac_to_f0])
    return 0


def cmd_frontier(args) -> int:
    path = Path(args.sweep)
    if not path.exists():
        raise DataError(f"sweep file not found: {path}")
    with open(path, newline="") as fh:
        rows = [row for row in csv.DictReader(fh)]
    rows = [r for r in rows if r.get("split") == args.split and r.get("accuracy")]
    rows = [r for r in rows if math.isfinite(float(r["accuracy"]))]
    if not rows:
        raise DataError(f"{path}: no usable rows for split '{args.split}'")
    points = [TradeoffPoint(float(r["accuracy"]), float(r["avg_cost"]),
                            float(r["frac_to_f0"]), params={"index": i})
              for i, r in enumerate(rows)]
    frontier = pareto_frontier(points)
    with open(args.out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        for fp in frontier:
            writer.writerow(rows[fp.params["index"]])
    print(f"frontier: kept {len(frontier)} of {len(rows)} points")
    return 0


_COMMANDS = {
    "synth": cmd_synth,
    "train-f0": cmd_train_f0,
    "train": cmd_train,
    "sweep": cmd_sweep,
    "eval": cmd_eval,
    "frontier": cmd_frontier,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    try:
        argv = _inject_config(argv)
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except SolverNotConverged as exc:
        print(f"solver did not converge: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
