"""Experiment runner: seeded grids, aggregation, theory harness, service launcher.

Config files are JSON: a `base` object of run-config fields plus an optional
`grid` object mapping fields to lists (cartesian product). The pseudo-field
`policy` expands to the query-mode/baseline combination. Cell outputs land
under `<out>/<problem>/<policy>/<seed>/` and completed cells are skipped on
re-runs unless --force is given.
"""

from __future__ import annotations

import argparse
import itertools
import json
import logging
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import metrics
from .acquire import config_truth, make_dm_oracle, run_loop
from .bench import make_problem, problem_defaults
from .core import RunConfig, load_run, read_csv, save_run, write_csv

OUT_ENV_VAR = "MAOBO_OUT"

POLICY_IDS = (
    "random", "clusterless", "inter", "intra", "hybrid", "fixed_pref", "weighted_sum",
)

AGGREGATE_METRICS = {
    "regret.csv": ["simple_regret"],
    "archetype_error.csv": ["mean_aligned_l1", "min_aligned_l1", "max_aligned_l1"],
    "eta_kl.csv": ["kl_eta_star_vs_aligned"],
    "pref_errors.csv": ["mixture_mean_l1", "map_cluster_l1", "expected_l1"],
}


def policy_overrides(policy: str) -> dict:
    """Map a policy id onto run-config fields (baselines share the loop)."""
    if policy not in POLICY_IDS:
        raise ValueError(
            f"unknown policy {policy!r}; valid options: {', '.join(POLICY_IDS)}"
        )
    if policy == "fixed_pref":
        return {"query_mode": "random", "fixed_pref": True, "scalarization": "chebyshev"}
    if policy == "weighted_sum":
        return {"query_mode": "hybrid", "fixed_pref": False, "scalarization": "weighted_sum"}
    return {"query_mode": policy, "fixed_pref": False, "scalarization": "chebyshev"}


def policy_id(cfg: RunConfig) -> str:
    if cfg.fixed_pref:
        return "fixed_pref"
    if cfg.scalarization == "weighted_sum":
        return "weighted_sum"
    return cfg.query_mode


def complete_config(base: dict) -> RunConfig:
    """Fill problem-dependent defaults (eta*, groups, noise scales) and validate."""
    problem_id = base.get("problem", "dtlz2")
    merged = dict(problem_defaults(problem_id))
    merged.update(base)
    policy = merged.pop("policy", None)
    if policy is not None:
        merged.update(policy_overrides(policy))
    cfg = RunConfig.from_dict(merged)
    cfg.validate()
    return cfg


def expand_grid(config: dict) -> list[RunConfig]:
    base = dict(config.get("base", {}))
    grid = config.get("grid", {})
    if not grid:
        return [complete_config(base)]
    keys = sorted(grid)
    cells = []
    for combo in itertools.product(*(grid[k] for k in keys)):
        cell = dict(base)
        cell.update(dict(zip(keys, combo)))
        cells.append(complete_config(cell))
    paths = {cell_dir(Path("."), c) for c in cells}
    if len(paths) != len(cells):
        raise ValueError("grid cells collide: problem/policy/seed must distinguish them")
    return cells


def cell_dir(out_root: Path, cfg: RunConfig) -> Path:
    problem_name = cfg.problem.split(":")[0] if ":" in cfg.problem else cfg.problem
    if cfg.context_regime != "persistent":  # non-default regimes get their own tree
        problem_name = f"{problem_name}-{cfg.context_regime}"
    return Path(out_root) / problem_name / policy_id(cfg) / str(cfg.seed)


def cell_complete(path: Path, cfg: RunConfig) -> bool:
    records_path = path / "records.jsonl"
    if not records_path.exists():
        return False
    try:
        records = load_run(records_path)
    except (ValueError, FileNotFoundError):
        return False
    return len(records) == cfg.n_iterations


def run_cell(cfg: RunConfig, out_root: Path, force: bool = False) -> Path:
    """Execute one grid cell and write records + metric CSVs. Idempotent."""
    path = cell_dir(out_root, cfg)
    if not force and cell_complete(path, cfg):
        return path
    problem = make_problem(cfg.problem)
    cache_dir = Path(out_root) / "_refcache"
    if cfg.eta_star and cfg.groups:
        records = run_loop(cfg, problem, make_dm_oracle(cfg, problem), cache_dir=cache_dir)
    else:
        raise ValueError(
            "batch runs need a simulated decision maker (eta_star and groups); "
            "use `maobo serve` for human sessions"
        )
    path.mkdir(parents=True, exist_ok=True)
    with open(path / "config.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    write_csv(
        path / "timing.csv", ["iteration", "wall_clock_seconds"],
        [(r.iteration, r.wall_clock) for r in records],
    )
    save_run([r.without_wall_clock() for r in records], path / "records.jsonl")
    metrics.write_metric_csvs(
        [r.without_wall_clock() for r in records], path,
        theta_star=config_truth(cfg, problem.n_objectives),
    )
    return path


def _run_cell_worker(args) -> str:
    cfg_dict, out_root, force = args
    path = run_cell(RunConfig.from_dict(cfg_dict), Path(out_root), force)
    return str(path)


def cmd_run(config_path: str, out: str | None, seed: int | None, force: bool,
            workers: int, overrides: list[str]) -> int:
    with open(config_path, "r", encoding="utf-8") as fh:
        config = json.load(fh)
    base = config.setdefault("base", {})
    for item in overrides:
        key, _, raw = item.partition("=")
        if not _:
            raise ValueError(f"override {item!r} must look like key=value")
        try:
            base[key] = json.loads(raw)
        except json.JSONDecodeError:
            base[key] = raw
    if out is not None:
        base["out_dir"] = out
    if seed is not None:
        config.setdefault("grid", {})
        config["grid"].pop("seed", None)
        base["seed"] = seed
    cells = expand_grid(config)
    out_root = Path(base.get("out_dir") or os.environ.get(OUT_ENV_VAR, "runs"))
    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            jobs = [(c.to_dict(), str(out_root), force) for c in cells]
            for path in pool.map(_run_cell_worker, jobs):
                print(f"cell done: {path}")
    else:
        for cfg in cells:
            path = run_cell(cfg, out_root, force)
            print(f"cell done: {path}")
    return 0


def discover_cells(out_root: Path) -> list[Path]:
    return sorted(
        p.parent for p in Path(out_root).glob("*/*/*/records.jsonl")
    )


def aggregate(out_root: Path) -> list[Path]:
    """Mean and sample std (ddof=1) of each metric across seeds, per iteration."""
    cells = discover_cells(out_root)
    if not cells:
        raise FileNotFoundError(
            f"no completed cells under {out_root}; expected "
            f"<out>/<problem>/<policy>/<seed>/records.jsonl"
        )
    groups: dict[tuple[str, str], list[Path]] = {}
    for cell in cells:
        problem, policy, _seed = cell.parts[-3], cell.parts[-2], cell.parts[-1]
        groups.setdefault((problem, policy), []).append(cell)

    summary_dir = Path(out_root) / "summary"
    written = []
    for fname, columns in AGGREGATE_METRICS.items():
        rows = []
        for (problem, policy), cell_paths in sorted(groups.items()):
            per_seed = []
            for cell in cell_paths:
                if not (cell / fname).exists():
                    continue
                header, data = read_csv(cell / fname)
                idx = [header.index(c) for c in columns if c in header]
                vals = []
                for line in data:
                    vals.append([float(line[i]) if line[i] else np.nan for i in idx])
                per_seed.append(np.asarray(vals))
            if not per_seed:
                continue
            lengths = {a.shape[0] for a in per_seed}
            n_common = min(lengths)
            if len(lengths) > 1:
                warnings.warn(
                    f"{problem}/{policy}: unequal iteration counts {sorted(lengths)}; "
                    f"truncating to {n_common}"
                )
            stack = np.stack([a[:n_common] for a in per_seed])  # (seeds, T, cols)
            for t in range(n_common):
                for ci, col in enumerate(columns):
                    col_vals = stack[:, t, ci]
                    col_vals = col_vals[~np.isnan(col_vals)]
                    if col_vals.size == 0:
                        continue
                    std = float(np.std(col_vals, ddof=1)) if col_vals.size > 1 else 0.0
                    rows.append(
                        (problem, policy, t + 1, col, float(col_vals.mean()), std,
                         int(col_vals.size))
                    )
        path = summary_dir / fname.replace(".csv", "_summary.csv")
        write_csv(
            path,
            ["problem", "policy", "iteration", "metric", "mean", "std_sample", "n_seeds"],
            rows,
        )
        written.append(path)
    return written


def cmd_aggregate(out: str | None) -> int:
    out_root = Path(out or os.environ.get(OUT_ENV_VAR, "runs"))
    for path in aggregate(out_root):
        print(f"wrote {path}")
    return 0


def cmd_theory(config_path: str, out: str | None, seed: int | None,
               overrides: list[str]) -> int:
    with open(config_path, "r", encoding="utf-8") as fh:
        config = json.load(fh)
    base = dict(config.get("base", {}))
    for item in overrides:
        key, _, raw = item.partition("=")
        try:
            base[key] = json.loads(raw)
        except json.JSONDecodeError:
            base[key] = raw
    if out is not None:
        base["out_dir"] = out
    if seed is not None:
        base["seed"] = seed
    base["theory_check"] = True
    cfg = complete_config(base)
    if cfg.problem.startswith("tabular") or not (cfg.eta_star and cfg.groups):
        print(
            "theory checks need a simulation with ground truth "
            "(benchmark problem + eta_star/groups); refusing.",
            file=sys.stderr,
        )
        return 2
    out_root = Path(base.get("out_dir") or os.environ.get(OUT_ENV_VAR, "runs"))
    path = run_cell(cfg, out_root, force=True)
    records = load_run(path / "records.jsonl")
    report = metrics.theory_report(records)
    summary = report.summary_lines()
    with open(path / "theory_summary.txt", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(summary) + "\n")
    for line in summary:
        print(line)
    return 0 if report.mismatch_violations == 0 else 1


def cmd_serve(port: int, storage: str | None) -> int:
    import uvicorn

    from .elicit import create_app

    app = create_app(storage_dir=storage or os.environ.get(OUT_ENV_VAR, "runs"))
    uvicorn.run(app, host="127.0.0.1", port=port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="maobo",
        description="Mixture-aware preference-based many-objective Bayesian optimization",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a seeded experiment grid")
    p_run.add_argument("--config", required=True, help="JSON config file")
    p_run.add_argument("--out", default=None, help="output root (default $MAOBO_OUT or ./runs)")
    p_run.add_argument("--seed", type=int, default=None, help="override the run seed")
    p_run.add_argument("--force", action="store_true", help="re-run completed cells")
    p_run.add_argument("--workers", type=int, default=1, help="parallel grid cells")
    p_run.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE", help="override base config fields")

    p_agg = sub.add_parser("aggregate", help="mean ± sample std across seeds")
    p_agg.add_argument("--out", default=None)

    p_theory = sub.add_parser("theory", help="run with theory-check instrumentation")
    p_theory.add_argument("--config", required=True)
    p_theory.add_argument("--out", default=None)
    p_theory.add_argument("--seed", type=int, default=None)
    p_theory.add_argument("--set", dest="overrides", action="append", default=[],
                          metavar="KEY=VALUE")

    p_serve = sub.add_parser("serve", help="launch the live elicitation service")
    p_serve.add_argument("--port", type=int, default=8000)
    p_serve.add_argument("--storage", default=None, help="session persistence directory")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command in ("run", "theory"):
        logging.basicConfig(level=logging.INFO, format="%(name)s %(message)s")
    try:
        if args.command == "run":
            return cmd_run(args.config, args.out, args.seed, args.force,
                           args.workers, args.overrides)
        if args.command == "aggregate":
            return cmd_aggregate(args.out)
        if args.command == "theory":
            return cmd_theory(args.config, args.out, args.seed, args.overrides)
        if args.command == "serve":
            return cmd_serve(args.port, args.storage)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
