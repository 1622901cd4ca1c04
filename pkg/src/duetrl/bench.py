"""Open-loop throughput measurement and the random-policy return baseline.

Steps-per-second is wall-clock over exactly n_envs * iterations environment
steps after three untimed warm-up batch steps.  The same harness doubles as
the random-policy baseline for the training acceptance bar.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass

import numpy as np

from .envs import TaskId
from .errors import ContractViolationError
from .vecenv import ACTION_DIM, vreset, vstep

WARMUP_STEPS = 3

# Reference open-loop rates reported for the original GPU implementation at
# 512 vectorized environments; recorded for comparison only, never asserted.
REFERENCE_SPS = {"scratch": 26953, "bedbath": 34218, "armassist": 34097}
REFERENCE_RELATIVE_SPEEDUP = {"scratch": 116.6, "bedbath": 370.8,
                              "armassist": 238.19}


@dataclass
class SpsResult:
    task: str
    n_envs: int
    total_steps: int
    sps: float
    wall_s: float
    mean_random_return: float


class _EnvStepper:
    """Adapter giving the benchmark loop a uniform step interface."""

    def __init__(self, task, n_envs: int, seed: int):
        self.batch, _ = vreset(task, n_envs, seed)
        self.action_dim = ACTION_DIM

    def step(self, actions: np.ndarray):
        self.batch, _, rewards, dones, finals = vstep(self.batch, actions)
        return rewards, dones, finals


def measure_sps(stepper, n_envs: int, total_steps: int, seed: int) -> SpsResult:
    """Drive any stepper with uniform random actions and time it."""
    if total_steps < n_envs:
        raise ContractViolationError("total_steps must be >= n_envs")
    rng = np.random.default_rng(seed)
    iterations = total_steps // n_envs
    for _ in range(WARMUP_STEPS):
        stepper.step(rng.uniform(-1.0, 1.0, (n_envs, stepper.action_dim)))
    returns = []
    t0 = time.perf_counter()
    for _ in range(iterations):
        _, _, finals = stepper.step(
            rng.uniform(-1.0, 1.0, (n_envs, stepper.action_dim)))
        returns.extend(ret for _, ret in finals)
    wall = time.perf_counter() - t0
    steps = n_envs * iterations
    return SpsResult(
        task=getattr(stepper, "task", ""),
        n_envs=n_envs,
        total_steps=steps,
        sps=steps / wall,
        wall_s=wall,
        mean_random_return=float(np.mean(returns)) if returns else float("nan"),
    )


def open_loop_sps(task, n_envs: int, total_steps: int, seed: int) -> SpsResult:
    """Random-action throughput of a real task batch."""
    task = TaskId.parse(task)
    stepper = _EnvStepper(task, n_envs, seed)
    result = measure_sps(stepper, n_envs, total_steps, seed)
    result.task = task.value
    return result


def scaling_curve(task, env_counts, steps_per_point: int, seed: int) -> list[SpsResult]:
    if not env_counts:
        raise ContractViolationError("env_counts must be non-empty")
    return [open_loop_sps(task, int(n), max(int(n), steps_per_point), seed)
            for n in env_counts]


def write_sps_csv(path, results) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["task", "n_envs", "total_steps", "sps", "wall_s",
                         "mean_random_return"])
        for r in results:
            writer.writerow([r.task, r.n_envs, r.total_steps,
                             f"{r.sps:.2f}", f"{r.wall_s:.4f}",
                             f"{r.mean_random_return:.4f}"])
