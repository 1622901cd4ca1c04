"""Partner populations and zero-shot coordination.

A population is a catalog of frozen human-agent checkpoints indexed by
(task, algorithm, disability setting, seed).  A single-learner robot trains
against a uniformly resampled half of the population and is measured against
the unseen half; cross-play pairs the robot of one co-trained team with the
human of another.
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.cluster.hierarchy import leaves_list, linkage
from scipy.spatial.distance import squareform

from .algos import (PopulationPartner, default_config,
                    deterministic_actor, evaluate_team, team_spec_for,
                    train_team, TeamSpec)
from .envs import DEFAULT_REWARD_WEIGHTS, DisabilityProfile, TaskId
from .errors import CheckpointError, ContractViolationError
from .metrics import stratified_bootstrap_mean_ci
from .neural import load_policy, save_policy
from .rng import derive_seed
from .simcore import DEFAULT_SIM_CONFIG

# The nine partner disability settings: joint strength crossed with elbow
# range of motion, tremor held fixed at zero.
_STRENGTH_LEVELS = (1.0, 0.5, 0.25)
_ROM_LEVELS = (1.0, 0.66, 0.33)

DISABILITY_SETTINGS = {
    1 + i * len(_ROM_LEVELS) + j: DisabilityProfile(strength_multiplier=s,
                                                    elbow_rom_fraction=r)
    for i, s in enumerate(_STRENGTH_LEVELS)
    for j, r in enumerate(_ROM_LEVELS)
}

POPULATION_ALGORITHMS = ("ippo", "mappo", "masac")


@dataclass(frozen=True)
class PlanItem:
    task: str
    algorithm: str
    setting: int
    seed: int

    def key(self):
        return (self.task, self.algorithm, self.setting, self.seed)


@dataclass(frozen=True)
class PopulationEntry:
    task: str
    algorithm: str
    setting: int
    seed: int
    human_checkpoint: str
    robot_checkpoint: str

    def key(self):
        return (self.task, self.algorithm, self.setting, self.seed)

    def profile(self) -> DisabilityProfile:
        return DISABILITY_SETTINGS[self.setting]


@dataclass
class PartnerPopulation:
    entries: list[PopulationEntry] = field(default_factory=list)

    def __post_init__(self):
        keys = [e.key() for e in self.entries]
        if len(set(keys)) != len(keys):
            raise ContractViolationError("duplicate population entries")

    def __len__(self) -> int:
        return len(self.entries)

    def rollup(self) -> dict:
        """Counts per (algorithm, setting) and per task, manifest-style."""
        out: dict = {"total": len(self.entries), "by_task": {}, "by_algorithm": {}}
        for e in self.entries:
            out["by_task"][e.task] = out["by_task"].get(e.task, 0) + 1
            alg = out["by_algorithm"].setdefault(e.algorithm, {"total": 0, "by_setting": {}})
            alg["total"] += 1
            key = str(e.setting)
            alg["by_setting"][key] = alg["by_setting"].get(key, 0) + 1
        return out

    def to_json(self) -> str:
        return json.dumps({"entries": [asdict(e) for e in self.entries]},
                          indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "PartnerPopulation":
        doc = json.loads(text)
        return cls(entries=[PopulationEntry(**e) for e in doc["entries"]])

    def save(self, path) -> None:
        # atomic: write-temp-then-rename
        path = Path(path)
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text(self.to_json() + "\n")
        os.replace(tmp, path)

    @classmethod
    def load(cls, path) -> "PartnerPopulation":
        p = Path(path)
        if not p.exists():
            raise CheckpointError(f"population manifest not found: {path}")
        return cls.from_json(p.read_text())


def make_plan(tasks, algorithms, settings, seeds) -> list[PlanItem]:
    """Cross product with duplicate rejection."""
    items = [PlanItem(TaskId.parse(t).value, a.lower(), int(s), int(seed))
             for t in tasks for a in algorithms for s in settings for seed in seeds]
    keys = [i.key() for i in items]
    if len(set(keys)) != len(keys):
        raise ContractViolationError("duplicate (task, algorithm, setting, seed)")
    for item in items:
        if item.algorithm not in POPULATION_ALGORITHMS:
            raise ContractViolationError(
                f"population algorithm must be one of {POPULATION_ALGORITHMS}")
        if item.setting not in DISABILITY_SETTINGS:
            raise ContractViolationError(f"unknown disability setting {item.setting}")
    return items


def full_scale_plan() -> list[PlanItem]:
    """The full-population composition: 434 runs, 198 of them on Scratch.

    PPO-family runs cover all nine settings on Scratch but only settings 1-4
    on the other two tasks (8 seeds each); MASAC covers all nine settings on
    every task with 6 seeds.
    """
    items: list[PlanItem] = []
    for algorithm in ("ippo", "mappo"):
        items += make_plan(["scratch"], [algorithm], range(1, 10), range(8))
        for task in ("bedbath", "armassist"):
            items += make_plan([task], [algorithm], range(1, 5), range(8))
    for task in ("scratch", "bedbath", "armassist"):
        items += make_plan([task], ["masac"], range(1, 10), range(6))
    return items


def _train_population_item(args: dict) -> dict:
    """Worker for one population cell; safe to run in a subprocess."""
    item = PlanItem(**args["item"])
    cfg = default_config(item.algorithm)
    for k, v in args.get("cfg_overrides", {}).items():
        cfg = type(cfg)(**{**cfg.__dict__, k: v})
    result = train_team(item.task, item.algorithm, cfg=cfg,
                        total_steps=args["budget"], seed=item.seed,
                        disability=DISABILITY_SETTINGS[item.setting],
                        eval_cadence=args.get("eval_cadence", 0),
                        eval_episodes=args.get("eval_episodes", 8),
                        run_id=f"pop-{item.algorithm}-{item.task}-d{item.setting}-s{item.seed}")
    if result.failed:
        return {"item": args["item"], "failed": True, "reason": result.fail_reason}
    out_dir = Path(args["out_dir"])
    paths = {}
    for role, policy in result.checkpoints.items():
        name = f"{item.task}_{item.algorithm}_d{item.setting}_s{item.seed}_{role}.ckpt"
        meta = {
            "task": item.task, "algorithm": item.algorithm, "agent_role": role,
            "disability": asdict(DISABILITY_SETTINGS[item.setting]),
            "seed": item.seed, "setting": item.setting,
        }
        save_policy(out_dir / name, policy, meta)
        paths[role] = str(out_dir / name)
    log_rows = [dict(r) for r in result.runlog.rows]
    return {"item": args["item"], "failed": False, "paths": paths,
            "log_rows": log_rows}


def train_population(plan: list[PlanItem], budget_per_run: int, out_dir,
                     cfg_overrides: dict | None = None, jobs: int = 1,
                     eval_cadence: int = 0) -> tuple[PartnerPopulation, list[dict]]:
    """Run one training job per plan item; returns (population, failures).

    Failed runs are recorded with their reason and excluded from the
    population.  The manifest JSON is written atomically into out_dir.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs_args = [{"item": asdict(item), "budget": int(budget_per_run),
                  "out_dir": str(out_dir), "cfg_overrides": cfg_overrides or {},
                  "eval_cadence": eval_cadence} for item in plan]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_train_population_item, jobs_args))
    else:
        results = [_train_population_item(a) for a in jobs_args]
    entries, failures = [], []
    for res in results:
        if res["failed"]:
            failures.append(res)
            continue
        item = PlanItem(**res["item"])
        entries.append(PopulationEntry(
            task=item.task, algorithm=item.algorithm, setting=item.setting,
            seed=item.seed, human_checkpoint=res["paths"]["human"],
            robot_checkpoint=res["paths"]["robot"]))
    pop = PartnerPopulation(entries=entries)
    pop.save(out_dir / "population.json")
    if failures:
        (out_dir / "failures.json").write_text(json.dumps(failures, indent=2))
    return pop, failures


# ---------------------------------------------------------------------------
# split

@dataclass
class PopulationSplit:
    train_ids: list[int]
    test_ids: list[int]

    def __post_init__(self):
        if set(self.train_ids) & set(self.test_ids):
            raise ContractViolationError("split is not disjoint")


def split_population(pop: PartnerPopulation, rng) -> PopulationSplit:
    """Uniform random bisection; |train| = ceil(n / 2)."""
    n = len(pop)
    if n < 2:
        raise ContractViolationError("population must have >= 2 entries")
    g = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(int(rng))
    perm = g.permutation(n)
    k = (n + 1) // 2
    return PopulationSplit(train_ids=sorted(int(i) for i in perm[:k]),
                           test_ids=sorted(int(i) for i in perm[k:]))


# ---------------------------------------------------------------------------
# ZSC training and the robustness measure

def _load_partners(entries: list[PopulationEntry]):
    policies, profiles = [], []
    for e in entries:
        policy, meta = load_policy(e.human_checkpoint)
        if policy.action_dim != 3:
            raise ContractViolationError(
                f"partner {e.human_checkpoint} has action dim {policy.action_dim}, expected 3")
        policies.append(policy)
        profiles.append(e.profile())
    return policies, profiles


def train_zsc_agent(task, algorithm: str, train_entries: list[PopulationEntry],
                    cfg=None, total_steps: int = 0, seed: int = 0, *,
                    heldout_entries: list[PopulationEntry] | None = None,
                    eval_cadence: int = 100_000, episodes_per_partner: int = 4,
                    run_id: str | None = None,
                    weights=DEFAULT_REWARD_WEIGHTS, sim_cfg=DEFAULT_SIM_CONFIG):
    """SARL robot trained against per-reset uniform draws from the train set.

    Partner parameters stay frozen.  The run log carries the co-play measure
    against the train set (rows `<run_id>:train`) and, when a held-out set is
    given, against it as well (rows `<run_id>:heldout`).
    """
    task = TaskId.parse(task)
    algorithm = algorithm.lower()
    if algorithm not in ("ppo", "sac"):
        raise ContractViolationError("ZSC trains SARL agents: ppo or sac")
    if not train_entries:
        raise ContractViolationError("empty train population")
    cfg = cfg or default_config(algorithm)
    policies, profiles = _load_partners(train_entries)
    provider = PopulationPartner(policies, profiles)
    provider.initial_assignment(cfg.num_envs,
                                np.random.default_rng(derive_seed(seed, 3)))
    run_id = run_id or f"zsc-{algorithm}-{task.value}-s{seed}"

    eval_sets = {"train": train_entries}
    if heldout_entries:
        eval_sets["heldout"] = heldout_entries
    counter = {"k": 0}

    def evaluator(actors):
        counter["k"] += 1
        out = {}
        for label, entries in eval_sets.items():
            measured = evaluate_M(actors["robot"], entries, episodes_per_partner,
                                  derive_seed(seed, 0xE0000 + counter["k"]),
                                  weights=weights, sim_cfg=sim_cfg)
            out[label] = np.concatenate(list(measured.per_partner.values()))
        return out

    spec = TeamSpec(learners=("robot",), critic_mode="independent")
    result = train_team(task, algorithm, spec=spec, cfg=cfg,
                        total_steps=total_steps, seed=seed,
                        eval_cadence=eval_cadence, run_id=run_id,
                        weights=weights, sim_cfg=sim_cfg,
                        partner_provider=provider, evaluator=evaluator)
    result.extra["partner_draws"] = provider.draw_log
    return result


@dataclass
class MeasureResult:
    m: float
    per_partner: dict[str, np.ndarray]
    ci: tuple[float, float]


def _paired_returns(robot_policy, human_policy, profile, task, episodes, seed,
                    weights, sim_cfg):
    act_fns = {"robot": deterministic_actor(robot_policy),
               "human": deterministic_actor(human_policy)}
    return evaluate_team(task, act_fns, episodes, seed,
                         profiles=profile, weights=weights, sim_cfg=sim_cfg)


def evaluate_M(robot_policy, partner_entries: list[PopulationEntry],
               episodes_per_partner: int, seed: int, *,
               episode_runner=None, weights=DEFAULT_REWARD_WEIGHTS,
               sim_cfg=DEFAULT_SIM_CONFIG) -> MeasureResult:
    """Mean undiscounted return over partners drawn from the given set.

    Returns the pooled mean M, the per-partner breakdown, and a stratified
    (by partner) bootstrap CI of the mean.
    """
    if episodes_per_partner < 1:
        raise ContractViolationError("episodes_per_partner must be >= 1")
    if episode_runner is None and isinstance(robot_policy, (str, Path)):
        robot_policy, _ = load_policy(robot_policy)
    per_partner = {}
    for k, entry in enumerate(partner_entries):
        if episode_runner is not None:
            rets = np.asarray(episode_runner(entry, episodes_per_partner,
                                             derive_seed(seed, k)), dtype=np.float64)
        else:
            human_policy, _ = load_policy(entry.human_checkpoint)
            rets = _paired_returns(robot_policy, human_policy, entry.profile(),
                                   TaskId.parse(entry.task),
                                   episodes_per_partner, derive_seed(seed, k),
                                   weights, sim_cfg)
        per_partner[f"{entry.algorithm}-d{entry.setting}-s{entry.seed}"] = rets
    pooled = np.concatenate(list(per_partner.values()))
    ci = stratified_bootstrap_mean_ci(list(per_partner.values()), rng=seed)
    return MeasureResult(m=float(np.mean(pooled)), per_partner=per_partner, ci=ci)


# ---------------------------------------------------------------------------
# cross-play

@dataclass
class CrossplayMatrix:
    labels: list[str]
    matrix: np.ndarray
    episodes_per_cell: int
    permutation: list[int]

    def to_json(self) -> str:
        return json.dumps({
            "labels": self.labels,
            "matrix": self.matrix.tolist(),
            "episodes_per_cell": self.episodes_per_cell,
            "permutation": self.permutation,
        }, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "CrossplayMatrix":
        doc = json.loads(text)
        return cls(labels=doc["labels"], matrix=np.asarray(doc["matrix"]),
                   episodes_per_cell=int(doc["episodes_per_cell"]),
                   permutation=[int(p) for p in doc["permutation"]])


def crossplay(pop: PartnerPopulation, episodes_per_cell: int, seed: int, *,
              eval_fn=None, weights=DEFAULT_REWARD_WEIGHTS,
              sim_cfg=DEFAULT_SIM_CONFIG) -> CrossplayMatrix:
    """Cell (i, j): mean return of team i's robot paired with team j's human.

    The environment uses the human entry's disability profile.  Cells receive
    seeds derived from (seed, i, j), so the matrix is independent of
    evaluation order.
    """
    entries = pop.entries
    tasks = {e.task for e in entries}
    if len(tasks) > 1:
        raise ContractViolationError(f"cross-play needs one task, got {tasks}")
    n = len(entries)
    matrix = np.zeros((n, n))
    robot_cache: dict[int, object] = {}
    human_cache: dict[int, object] = {}
    for i in range(n):
        for j in range(n):
            cell_seed = derive_seed(seed, i * n + j)
            if eval_fn is not None:
                rets = np.asarray(eval_fn(entries[i], entries[j],
                                          episodes_per_cell, cell_seed))
            else:
                if i not in robot_cache:
                    robot_cache[i], _ = load_policy(entries[i].robot_checkpoint)
                if j not in human_cache:
                    human_cache[j], _ = load_policy(entries[j].human_checkpoint)
                rets = _paired_returns(robot_cache[i], human_cache[j],
                                       entries[j].profile(),
                                       TaskId.parse(entries[j].task),
                                       episodes_per_cell, cell_seed,
                                       weights, sim_cfg)
            matrix[i, j] = float(np.mean(rets))
    labels = [f"{e.algorithm}-d{e.setting}-s{e.seed}" for e in entries]
    perm = cluster_order(matrix)
    return CrossplayMatrix(labels=labels, matrix=matrix,
                           episodes_per_cell=episodes_per_cell,
                           permutation=[int(p) for p in perm])


def cluster_order(matrix: np.ndarray) -> list[int]:
    """Dendrogram leaf order from average-linkage agglomerative clustering.

    Distance is 1 - normalized symmetrized return; identical rows (and n <= 2)
    fall back to the identity permutation.
    """
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ContractViolationError("cluster_order expects a square matrix")
    n = m.shape[0]
    if n <= 2:
        return list(range(n))
    sym = 0.5 * (m + m.T)
    span = sym.max() - sym.min()
    if span <= 1e-12:
        return list(range(n))
    dist = 1.0 - (sym - sym.min()) / span
    np.fill_diagonal(dist, 0.0)
    z = linkage(squareform(dist, checks=False), method="average")
    return [int(i) for i in leaves_list(z)]


def checkpoint_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
