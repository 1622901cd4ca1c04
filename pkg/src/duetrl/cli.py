"""Command-line entry point.

Subcommands: train, train-population, zsc-train, zsc-eval, crossplay, bench,
sweep, report-data.  Every run writes a self-contained directory (config
snapshot, logs, checkpoints, summary JSON).  Exit codes: 0 success, 2 invalid
configuration (offending key printed), 3 missing checkpoint, 1 other errors.
"""

from __future__ import annotations

import argparse
import itertools
import json
import shutil
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from . import zsc as zsc_mod
from .algos import default_config, train_team
from .config import (RunConfig, apply_overrides, format_run_config,
                     load_run_config)
from .envs import TaskId, write_observation_manifest
from .errors import CheckpointError, ConfigError, ContractViolationError
from .metrics import auc, iqm, summarize
from .neural import save_policy
from .rng import derive_seed


def _prepare_outdir(path: str, force: bool) -> Path:
    out = Path(path)
    if out.exists() and any(out.iterdir()) and not force:
        raise ConfigError(
            f"output dir {out} exists and is not empty (use --force)",
            key="output_dir")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _prepare_outfile(path: str, force: bool) -> Path:
    out = Path(path)
    if out.exists() and not force:
        raise ConfigError(f"output file {out} exists (use --force)", key="out")
    out.parent.mkdir(parents=True, exist_ok=True)
    return out


def _load_config(args) -> RunConfig:
    cfg = load_run_config(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = []
    for flag, key in (("task", "task"), ("algo", "algorithm"),
                      ("seeds", "seeds"), ("total_steps", "total_steps"),
                      ("eval_cadence", "eval_cadence"),
                      ("output_dir", "output_dir")):
        value = getattr(args, flag, None)
        if value is not None:
            overrides.append(f"{key}={value}")
    overrides.extend(getattr(args, "set", []) or [])
    return apply_overrides(cfg, overrides) if overrides else cfg


# ---------------------------------------------------------------------------
# train

def cmd_train(args) -> int:
    cfg = _load_config(args)
    out = _prepare_outdir(cfg.output_dir, args.force)
    (out / "config.snapshot").write_text(format_run_config(cfg))
    task = TaskId.parse(cfg.task)
    per_seed_finals = []
    failed_runs = []
    for seed in cfg.seed_list():
        run_id = f"{cfg.algorithm}-{task.value}-s{seed}"
        result = train_team(task, cfg.algorithm, cfg=cfg.algo_config(),
                            total_steps=cfg.total_steps, seed=seed,
                            disability=cfg.disability,
                            eval_cadence=cfg.eval_cadence,
                            eval_episodes=cfg.eval_episodes, run_id=run_id,
                            weights=cfg.rewards)
        result.runlog.write_csv(out / f"runlog_seed{seed}.csv")
        for role, policy in result.checkpoints.items():
            meta = {"task": task.value, "algorithm": cfg.algorithm,
                    "agent_role": role, "disability": asdict(cfg.disability),
                    "seed": seed}
            save_policy(out / f"{task.value}_{cfg.algorithm}_s{seed}_{role}.ckpt",
                        policy, meta)
        if result.failed:
            failed_runs.append(run_id)
            print(f"run {run_id} failed: {result.fail_reason}", file=sys.stderr)
        per_seed_finals.append(result.final_eval_returns or [float("nan")])
    ok = [r for r in per_seed_finals if np.isfinite(r).all()]
    summary = {"task": task.value, "algorithm": cfg.algorithm,
               "seeds": cfg.seed_list(), "total_steps": cfg.total_steps}
    if ok and cfg.total_steps > 0:
        stats = summarize(ok, rng=0)
        summary["final_iqm"] = stats.iqm
        summary["final_ci"] = [stats.ci_lo, stats.ci_hi]
        summary["per_seed_final_iqm"] = [iqm(r) for r in per_seed_finals]
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    print(json.dumps(summary, indent=2))
    return 1 if failed_runs else 0


# ---------------------------------------------------------------------------
# population / zsc / crossplay

def _parse_int_list(text: str) -> list[int]:
    return [int(x) for x in str(text).split(",") if x != ""]


def cmd_train_population(args) -> int:
    if args.full_scale:
        plan = zsc_mod.full_scale_plan()
    else:
        plan = zsc_mod.make_plan(
            tasks=args.tasks.split(","),
            algorithms=args.algos.split(","),
            settings=_parse_int_list(args.settings),
            seeds=_parse_int_list(args.seeds),
        )
    if args.dry_run:
        pop = zsc_mod.PartnerPopulation(entries=[
            zsc_mod.PopulationEntry(task=i.task, algorithm=i.algorithm,
                                    setting=i.setting, seed=i.seed,
                                    human_checkpoint="", robot_checkpoint="")
            for i in plan])
        print(json.dumps(pop.rollup(), indent=2))
        return 0
    out = _prepare_outdir(args.output_dir, args.force)
    overrides = _kv_pairs(args.set)
    pop, failures = zsc_mod.train_population(
        plan, args.budget, out, cfg_overrides=overrides, jobs=args.jobs)
    print(json.dumps(pop.rollup(), indent=2))
    if failures:
        print(f"{len(failures)} runs failed (see failures.json)", file=sys.stderr)
    return 0


def _kv_pairs(pairs) -> dict:
    out = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not key=value", key=pair)
        k, _, v = pair.partition("=")
        from .config import _parse_scalar
        out[k.strip()] = _parse_scalar(v)
    return out


def cmd_zsc_train(args) -> int:
    pop = zsc_mod.PartnerPopulation.load(args.population)
    out = _prepare_outdir(args.output_dir, args.force)
    split = zsc_mod.split_population(pop, args.split_seed)
    (out / "split.json").write_text(json.dumps(asdict(split), indent=2))
    train_entries = [pop.entries[i] for i in split.train_ids]
    test_entries = [pop.entries[i] for i in split.test_ids]
    cfg = default_config(args.algo)
    overrides = _kv_pairs(args.set)
    if overrides:
        cfg = type(cfg)(**{**cfg.__dict__, **overrides})
    result = zsc_mod.train_zsc_agent(
        args.task, args.algo, train_entries, cfg=cfg,
        total_steps=args.total_steps, seed=args.seed,
        heldout_entries=test_entries, eval_cadence=args.eval_cadence,
        episodes_per_partner=args.episodes_per_partner)
    result.runlog.write_csv(out / "runlog.csv")
    robot = result.checkpoints["robot"]
    ckpt_path = out / f"zsc_{args.algo}_{args.task}_s{args.seed}_robot.ckpt"
    save_policy(ckpt_path, robot, {
        "task": TaskId.parse(args.task).value, "algorithm": f"zsc-{args.algo}",
        "agent_role": "robot", "disability": {}, "seed": args.seed})
    m_train = zsc_mod.evaluate_M(robot, train_entries,
                                 args.episodes_per_partner,
                                 derive_seed(args.seed, 0xF1))
    m_test = zsc_mod.evaluate_M(robot, test_entries, args.episodes_per_partner,
                                derive_seed(args.seed, 0xF2))
    summary = {
        "task": TaskId.parse(args.task).value, "algorithm": args.algo,
        "seed": args.seed, "failed": result.failed,
        "m_train": m_train.m, "m_train_ci": list(m_train.ci),
        "m_test": m_test.m, "m_test_ci": list(m_test.ci),
        "checkpoint": str(ckpt_path),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    print(json.dumps(summary, indent=2))
    return 0


def cmd_zsc_eval(args) -> int:
    pop = zsc_mod.PartnerPopulation.load(args.population)
    entries = pop.entries
    if args.split:
        split_doc = json.loads(Path(args.split).read_text())
        ids = split_doc["test_ids" if args.which == "test" else "train_ids"]
        entries = [pop.entries[i] for i in ids]
    measured = zsc_mod.evaluate_M(args.robot, entries,
                                  args.episodes_per_partner, args.seed)
    doc = {"m": measured.m, "ci": list(measured.ci),
           "per_partner": {k: list(map(float, v))
                           for k, v in measured.per_partner.items()}}
    text = json.dumps(doc, indent=2)
    if args.out:
        _prepare_outfile(args.out, args.force).write_text(text)
    print(text)
    return 0


def cmd_crossplay(args) -> int:
    pop = zsc_mod.PartnerPopulation.load(args.population)
    out = _prepare_outfile(args.out, args.force)
    matrix = zsc_mod.crossplay(pop, args.episodes, args.seed)
    out.write_text(matrix.to_json())
    print(f"wrote {out} ({len(matrix.labels)}x{len(matrix.labels)})")
    return 0


# ---------------------------------------------------------------------------
# bench / sweep / report-data

def cmd_bench(args) -> int:
    counts = _parse_int_list(args.envs)
    out = _prepare_outfile(args.out, args.force)
    results = bench_mod.scaling_curve(args.task, counts, args.steps_per_point,
                                      args.seed)
    bench_mod.write_sps_csv(out, results)
    ref = bench_mod.REFERENCE_SPS.get(TaskId.parse(args.task).value)
    for r in results:
        print(f"n_envs={r.n_envs:>5d}  sps={r.sps:>10.0f}  wall={r.wall_s:.2f}s"
              f"  mean_random_return={r.mean_random_return:.2f}")
    if ref:
        print(f"reference GPU open-loop rate at 512 envs: {ref} sps "
              "(hardware-specific, not asserted)")
    return 0


def cmd_sweep(args) -> int:
    grid_doc = json.loads(Path(args.grid).read_text())
    out = _prepare_outdir(args.output_dir, args.force)
    task = TaskId.parse(grid_doc["task"])
    algorithm = grid_doc["algorithm"]
    total_steps = int(grid_doc["total_steps"])
    n_seeds = int(grid_doc.get("seeds", 1))
    cadence = int(grid_doc.get("eval_cadence", max(1, total_steps // 5)))
    grid = grid_doc.get("grid", {})
    keys = sorted(grid)
    rows = []
    for values in itertools.product(*(grid[k] for k in keys)):
        overrides = dict(zip(keys, values))
        cfg = default_config(algorithm)
        flat = {k.split(".", 1)[1] if "." in k else k: v
                for k, v in overrides.items()}
        cfg = type(cfg)(**{**cfg.__dict__, **flat})
        aucs = []
        for i in range(n_seeds):
            seed = derive_seed(grid_doc.get("base_seed", 0), i)
            result = train_team(task, algorithm, cfg=cfg,
                                total_steps=total_steps, seed=seed,
                                eval_cadence=cadence, eval_episodes=4,
                                run_id=f"sweep-{len(rows)}-s{seed}")
            curve = [(r["env_step"], r["eval_return_iqm"])
                     for r in result.runlog.rows]
            if len({s for s, _ in curve}) != len(curve):
                curve = curve[-1:]
            aucs.append(auc(curve) if curve else float("nan"))
        rows.append({**overrides, "auc": float(np.nanmean(aucs))})
    rows.sort(key=lambda r: -r["auc"])
    import csv as _csv
    with open(out / "sweep_results.csv", "w", newline="") as fh:
        writer = _csv.DictWriter(fh, fieldnames=["rank", "auc", *keys])
        writer.writeheader()
        for rank, row in enumerate(rows, start=1):
            writer.writerow({"rank": rank, "auc": f"{row['auc']:.4f}",
                             **{k: row[k] for k in keys}})
    print(f"ran {len(rows)} settings; best auc {rows[0]['auc']:.2f}"
          if rows else "empty grid")
    return 0


def cmd_report_data(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    copied = 0
    for src in args.runs:
        src = Path(src)
        files = ([src] if src.is_file()
                 else [p for p in src.rglob("*") if p.suffix in (".csv", ".json")])
        for f in files:
            shutil.copy2(f, out / f.name)
            copied += 1
    write_observation_manifest(out / "obs_manifest.json")
    print(f"bundled {copied} artifacts into {out}")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="duetrl",
        description="Two-agent assistive-control RL benchmark engine")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a team on one task")
    p.add_argument("--config")
    p.add_argument("--task")
    p.add_argument("--algo")
    p.add_argument("--seeds")
    p.add_argument("--total-steps", dest="total_steps", type=int)
    p.add_argument("--eval-cadence", dest="eval_cadence", type=int)
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--force", action="store_true")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("train-population", help="train partner populations")
    p.add_argument("--tasks", default="scratch")
    p.add_argument("--algos", default="ippo")
    p.add_argument("--settings", default="1,2")
    p.add_argument("--seeds", default="0,1,2,3")
    p.add_argument("--budget", type=int, default=300_000)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--full-scale", action="store_true")
    p.add_argument("--dry-run", action="store_true")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--output-dir", dest="output_dir", default="runs/population")
    p.add_argument("--force", action="store_true")
    p.set_defaults(fn=cmd_train_population)

    p = sub.add_parser("zsc-train", help="train a robot against a partner population")
    p.add_argument("--population", required=True)
    p.add_argument("--task", required=True)
    p.add_argument("--algo", default="ppo", choices=["ppo", "sac"])
    p.add_argument("--total-steps", dest="total_steps", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split-seed", dest="split_seed", type=int, default=0)
    p.add_argument("--eval-cadence", dest="eval_cadence", type=int, default=200_000)
    p.add_argument("--episodes-per-partner", dest="episodes_per_partner",
                   type=int, default=4)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--output-dir", dest="output_dir", default="runs/zsc")
    p.add_argument("--force", action="store_true")
    p.set_defaults(fn=cmd_zsc_train)

    p = sub.add_parser("zsc-eval", help="evaluate a robot against partners")
    p.add_argument("--robot", required=True)
    p.add_argument("--population", required=True)
    p.add_argument("--split")
    p.add_argument("--which", choices=["train", "test"], default="test")
    p.add_argument("--episodes-per-partner", dest="episodes_per_partner",
                   type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--force", action="store_true")
    p.set_defaults(fn=cmd_zsc_eval)

    p = sub.add_parser("crossplay", help="pairwise team evaluation matrix")
    p.add_argument("--population", required=True)
    p.add_argument("--episodes", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="crossplay.json")
    p.add_argument("--force", action="store_true")
    p.set_defaults(fn=cmd_crossplay)

    p = sub.add_parser("bench", help="open-loop throughput scaling")
    p.add_argument("--task", default="scratch")
    p.add_argument("--envs", default="1,8,64,512")
    p.add_argument("--steps-per-point", dest="steps_per_point", type=int,
                   default=20_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="bench.csv")
    p.add_argument("--force", action="store_true")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("sweep", help="hyperparameter grid ranked by AUC")
    p.add_argument("--grid", required=True)
    p.add_argument("--output-dir", dest="output_dir", default="runs/sweep")
    p.add_argument("--force", action="store_true")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("report-data", help="bundle artifacts for the report tool")
    p.add_argument("--runs", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_report_data)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as err:
        print(f"config error: {err} (key: {err.key})", file=sys.stderr)
        return 2
    except ContractViolationError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except CheckpointError as err:
        print(f"checkpoint error: {err}", file=sys.stderr)
        return 3
    except Exception as err:  # structured failure, non-zero exit
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
