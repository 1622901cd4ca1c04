"""Readers for the engine's file formats (the only coupling to the engine)."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

RUNLOG_FIELDS = ("run_id", "task", "algorithm", "seed", "env_step",
                 "eval_return_iqm", "eval_return_ci_lo", "eval_return_ci_hi",
                 "wallclock_s")


def read_runlog_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(RUNLOG_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing run-log columns {sorted(missing)}")
        rows = []
        for row in reader:
            row["env_step"] = int(row["env_step"])
            for key in ("eval_return_iqm", "eval_return_ci_lo",
                        "eval_return_ci_hi", "wallclock_s"):
                row[key] = float(row[key])
            rows.append(row)
    return rows


def read_crossplay_json(path) -> dict:
    doc = json.loads(Path(path).read_text())
    matrix = np.asarray(doc["matrix"], dtype=float)
    n = matrix.shape[0]
    if matrix.shape != (n, n):
        raise ValueError(f"{path}: cross-play matrix is not square")
    perm = [int(p) for p in doc["permutation"]]
    if sorted(perm) != list(range(n)):
        raise ValueError(f"{path}: permutation is not a bijection")
    return {"labels": list(doc["labels"]), "matrix": matrix,
            "permutation": perm,
            "episodes_per_cell": int(doc["episodes_per_cell"])}


def read_bench_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = []
        for row in csv.DictReader(fh):
            rows.append({
                "task": row["task"],
                "n_envs": int(row["n_envs"]),
                "total_steps": int(row["total_steps"]),
                "sps": float(row["sps"]),
                "wall_s": float(row["wall_s"]),
                "mean_random_return": float(row["mean_random_return"]),
            })
    return rows


def read_population_json(path) -> dict:
    doc = json.loads(Path(path).read_text())
    return doc
