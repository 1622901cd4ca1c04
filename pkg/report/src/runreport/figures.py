"""Renderers. Each writes an image file and returns the values it drew."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .io import (read_bench_csv, read_crossplay_json, read_population_json,
                 read_runlog_csv)

# fixed output settings keep re-renders byte-stable
_SAVE_KWARGS = {"dpi": 110, "metadata": {"Software": "runreport"}}
_COLORS = plt.rcParams["axes.prop_cycle"].by_key()["color"]


def _save(fig, out_image):
    out = Path(out_image)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, **_SAVE_KWARGS)
    plt.close(fig)


def _gather_rows(runlog_csvs) -> list[dict]:
    if isinstance(runlog_csvs, (str, Path)):
        runlog_csvs = [runlog_csvs]
    rows = []
    for path in runlog_csvs:
        rows.extend(read_runlog_csv(path))
    return rows


def render_learning_curves(runlog_csvs, out_image) -> dict:
    """One curve per algorithm with its engine-computed CI band."""
    rows = _gather_rows(runlog_csvs)
    by_run: dict[str, list[dict]] = {}
    for row in rows:
        by_run.setdefault(row["run_id"], []).append(row)
    fig, ax = plt.subplots(figsize=(6, 4))
    seen_algos: list[str] = []
    for run_id in sorted(by_run):
        series = sorted(by_run[run_id], key=lambda r: r["env_step"])
        algo = series[0]["algorithm"]
        if algo not in seen_algos:
            seen_algos.append(algo)
            label = algo
        else:
            label = None
        color = _COLORS[seen_algos.index(algo) % len(_COLORS)]
        steps = [r["env_step"] for r in series]
        iqm = [r["eval_return_iqm"] for r in series]
        lo = [r["eval_return_ci_lo"] for r in series]
        hi = [r["eval_return_ci_hi"] for r in series]
        ax.plot(steps, iqm, color=color, label=label)
        if any(h != l for h, l in zip(hi, lo)):
            ax.fill_between(steps, lo, hi, color=color, alpha=0.2, linewidth=0)
    ax.set_xlabel("environment steps")
    ax.set_ylabel("return (IQM, 95% CI)")
    ax.legend()
    _save(fig, out_image)
    return {"algorithms": seen_algos, "n_runs": len(by_run)}


def render_crossplay(crossplay_json, out_image) -> dict:
    """Heatmap in the stored cluster order with a return colorbar."""
    doc = (crossplay_json if isinstance(crossplay_json, dict)
           else read_crossplay_json(crossplay_json))
    perm = doc["permutation"]
    matrix = doc["matrix"]
    drawn = matrix[np.ix_(perm, perm)]
    labels = [doc["labels"][p] for p in perm]
    fig, ax = plt.subplots(figsize=(5.5, 4.5))
    image = ax.imshow(drawn, interpolation="nearest")
    fig.colorbar(image, ax=ax, label="return")
    ax.set_xticks(range(len(labels)))
    ax.set_yticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=90, fontsize=6)
    ax.set_yticklabels(labels, fontsize=6)
    ax.set_xlabel("human of team")
    ax.set_ylabel("robot of team")
    _save(fig, out_image)
    return {"drawn": drawn, "labels": labels}


def render_zsc_bars(runlog_csvs, out_image) -> dict:
    """Train-vs-heldout bars from the final row of each labeled run."""
    rows = _gather_rows(runlog_csvs)
    finals: dict[str, dict[str, dict]] = {}
    for row in rows:
        run_id = row["run_id"]
        if ":" not in run_id:
            continue
        base, label = run_id.rsplit(":", 1)
        slot = finals.setdefault(base, {})
        if label not in slot or row["env_step"] >= slot[label]["env_step"]:
            slot[label] = row
    bases = sorted(finals)
    labels = ("train", "heldout")
    width = 0.35
    fig, ax = plt.subplots(figsize=(6, 4))
    drawn = {}
    for k, label in enumerate(labels):
        xs, ys, errs = [], [], []
        for i, base in enumerate(bases):
            row = finals[base].get(label)
            if row is None:
                continue
            xs.append(i + (k - 0.5) * width)
            ys.append(row["eval_return_iqm"])
            errs.append([row["eval_return_iqm"] - row["eval_return_ci_lo"],
                         row["eval_return_ci_hi"] - row["eval_return_iqm"]])
        if xs:
            # nested python lists sidestep a matplotlib scalar-coercion wart
            yerr = [[float(e[0]) for e in errs], [float(e[1]) for e in errs]]
            ax.bar(xs, ys, width=width, label=label, yerr=yerr, capsize=3)
        drawn[label] = dict(zip(bases, ys))
    ax.set_xticks(range(len(bases)))
    ax.set_xticklabels(bases, rotation=20, fontsize=7)
    ax.set_ylabel("return (IQM, 95% CI)")
    ax.legend()
    _save(fig, out_image)
    return {"bases": bases, "values": drawn}


def render_sps_scaling(bench_csv, out_image) -> dict:
    """Steps-per-second against the number of vectorized environments."""
    rows = read_bench_csv(bench_csv)
    by_task: dict[str, list[dict]] = {}
    for row in rows:
        by_task.setdefault(row["task"], []).append(row)
    fig, ax = plt.subplots(figsize=(5.5, 4))
    drawn = {}
    for task in sorted(by_task):
        series = sorted(by_task[task], key=lambda r: r["n_envs"])
        n = [r["n_envs"] for r in series]
        sps = [r["sps"] for r in series]
        ax.plot(n, sps, marker="o", label=task)
        drawn[task] = dict(zip(n, sps))
    ax.set_xscale("log", base=2)
    ax.set_yscale("log")
    ax.set_xlabel("vectorized environments")
    ax.set_ylabel("steps per second")
    ax.legend()
    _save(fig, out_image)
    return drawn


def render_population_treemap(population_json, out_image) -> dict:
    """Slice-and-dice treemap of the partner population composition.

    Algorithms split the canvas horizontally in proportion to their entry
    counts; disability settings split each algorithm block vertically.
    """
    doc = (population_json if isinstance(population_json, dict)
           else read_population_json(population_json))
    counts: dict[str, dict[str, int]] = {}
    for entry in doc["entries"]:
        algo = entry["algorithm"]
        setting = str(entry["setting"])
        counts.setdefault(algo, {})
        counts[algo][setting] = counts[algo].get(setting, 0) + 1
    total = sum(sum(s.values()) for s in counts.values())
    fig, ax = plt.subplots(figsize=(6, 4))
    x = 0.0
    areas = {}
    for ai, algo in enumerate(sorted(counts)):
        algo_total = sum(counts[algo].values())
        w = algo_total / total
        y = 0.0
        color = _COLORS[ai % len(_COLORS)]
        for setting in sorted(counts[algo], key=int):
            h = counts[algo][setting] / algo_total
            ax.add_patch(plt.Rectangle((x, y), w, h, facecolor=color,
                                       edgecolor="white",
                                       alpha=0.5 + 0.5 * (int(setting) % 2)))
            if w > 0.08 and h > 0.08:
                ax.text(x + w / 2, y + h / 2, f"d{setting}", ha="center",
                        va="center", fontsize=7)
            areas[f"{algo}/{setting}"] = w * h
            y += h
        ax.text(x + w / 2, 1.02, f"{algo} (n={algo_total})", ha="center",
                fontsize=8)
        x += w
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1.08)
    ax.set_axis_off()
    _save(fig, out_image)
    return {"areas": areas, "total": total}
