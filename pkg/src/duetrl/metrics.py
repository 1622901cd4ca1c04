"""Evaluation statistics and run-log aggregation.

The interquartile mean uses fractional endpoint weights so it is defined for
any sample size and coincides with plain 25% trimming when n is divisible by
four.  Bootstrap intervals are percentile intervals over stratified
resampling: runs are resampled with replacement, then episodes within each
chosen run.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolationError


@dataclass
class MetricSummary:
    iqm: float
    ci_lo: float
    ci_hi: float
    n_runs: int
    n_episodes: int


def iqm(samples) -> float:
    """Mean of the central 50% of the sorted sample, fractional weights."""
    x = np.sort(np.asarray(samples, dtype=np.float64).ravel())
    n = x.size
    if n == 0:
        raise ContractViolationError("iqm of an empty sample")
    lo = 0.25 * n
    hi = 0.75 * n
    idx = np.arange(n)
    # overlap of [i, i+1) with [lo, hi]
    w = np.clip(np.minimum(idx + 1.0, hi) - np.maximum(idx, lo), 0.0, 1.0)
    return float(np.sum(w * x) / (hi - lo))


def _stratified_ci(per_run_samples, stat_fn, level: float, resamples: int, rng):
    """Shared resampling core: runs with replacement, then episodes within."""
    runs = [np.asarray(r, dtype=np.float64).ravel() for r in per_run_samples]
    if not runs or any(r.size == 0 for r in runs):
        raise ContractViolationError("need >= 1 run, each with >= 1 episode")
    if isinstance(rng, np.random.Generator):
        seed_seq = np.random.SeedSequence(int(rng.integers(0, 2 ** 63)))
    else:
        seed_seq = np.random.SeedSequence(int(rng))
    children = seed_seq.spawn(resamples)
    n_runs = len(runs)
    stats = np.empty(resamples)
    for k, child in enumerate(children):
        g = np.random.default_rng(child)
        chosen = g.integers(0, n_runs, size=n_runs)
        pooled = [runs[i][g.integers(0, runs[i].size, size=runs[i].size)]
                  for i in chosen]
        stats[k] = stat_fn(np.concatenate(pooled))
    alpha = 100.0 * (1.0 - level) / 2.0
    lo, hi = np.percentile(stats, [alpha, 100.0 - alpha])
    return float(lo), float(hi)


def stratified_bootstrap_ci(per_run_samples, level: float = 0.95,
                            resamples: int = 2000, rng=0):
    """Percentile bootstrap interval of the pooled IQM, stratified by run.

    Each resample draws a per-resample child seed, so the result does not
    depend on evaluation order or worker count.
    """
    return _stratified_ci(per_run_samples, iqm, level, resamples, rng)


def stratified_bootstrap_mean_ci(per_run_samples, level: float = 0.95,
                                 resamples: int = 2000, rng=0):
    """Same stratified scheme with the plain mean as the statistic."""
    return _stratified_ci(per_run_samples, np.mean, level, resamples, rng)


def summarize(per_run_samples, level: float = 0.95, resamples: int = 2000,
              rng=0) -> MetricSummary:
    runs = [np.asarray(r, dtype=np.float64).ravel() for r in per_run_samples]
    pooled = np.concatenate(runs)
    lo, hi = stratified_bootstrap_ci(runs, level=level, resamples=resamples, rng=rng)
    center = iqm(pooled)
    return MetricSummary(iqm=center, ci_lo=min(lo, center), ci_hi=max(hi, center),
                         n_runs=len(runs), n_episodes=int(pooled.size))


def auc(curve) -> float:
    """Mean of the return values of a (step, return) curve."""
    pts = list(curve)
    if not pts:
        raise ContractViolationError("auc of an empty curve")
    steps = np.asarray([p[0] for p in pts], dtype=np.float64)
    if np.any(np.diff(steps) <= 0):
        raise ContractViolationError("curve steps must be strictly increasing")
    return float(np.mean([p[1] for p in pts]))


# ---------------------------------------------------------------------------
# run logs

RUNLOG_FIELDS = ("run_id", "task", "algorithm", "seed", "env_step",
                 "eval_return_iqm", "eval_return_ci_lo", "eval_return_ci_hi",
                 "wallclock_s")


@dataclass
class RunLog:
    """Append-only evaluation records for one training run."""

    run_id: str
    task: str
    algorithm: str
    seed: int
    rows: list[dict] = field(default_factory=list)

    def append(self, env_step: int, ret_iqm: float, ci_lo: float, ci_hi: float,
               wallclock_s: float) -> None:
        self.rows.append({
            "run_id": self.run_id,
            "task": self.task,
            "algorithm": self.algorithm,
            "seed": self.seed,
            "env_step": int(env_step),
            "eval_return_iqm": float(ret_iqm),
            "eval_return_ci_lo": float(ci_lo),
            "eval_return_ci_hi": float(ci_hi),
            "wallclock_s": float(wallclock_s),
        })

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=RUNLOG_FIELDS)
            writer.writeheader()
            for row in self.rows:
                writer.writerow(row)

    @staticmethod
    def read_csv(path) -> list[dict]:
        with open(path, newline="") as fh:
            rows = []
            for row in csv.DictReader(fh):
                row["seed"] = int(row["seed"])
                row["env_step"] = int(row["env_step"])
                for k in ("eval_return_iqm", "eval_return_ci_lo",
                          "eval_return_ci_hi", "wallclock_s"):
                    row[k] = float(row[k])
                rows.append(row)
            return rows
