"""Team training orchestration for the four MARL baselines and SARL variants.

A trainer owns a vectorized batch of environments, one actor (and critic(s))
per learning role, and an optional partner provider that controls a frozen
role.  Partner reassignment happens just before an instance's final step so
that the in-place auto-reset draws the next episode under the new partner's
disability profile.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..envs import (DEFAULT_REWARD_WEIGHTS, DisabilityProfile, HORIZON,
                    RewardWeights, TaskId, observation_dim)
from ..errors import ContractViolationError, SimulationFaultError
from ..metrics import RunLog, iqm, stratified_bootstrap_ci
from ..neural import (AdamState, PolicyParams, critic_init, load_policy,
                      policy_init, policy_mean_action, policy_sample)
from ..rng import derive_seed
from ..simcore import DEFAULT_SIM_CONFIG, SimConfig
from ..vecenv import vreset, vstep
from .configs import (PpoConfig, ROLES, SacConfig, TeamSpec, default_config,
                      is_ppo, team_spec_for)
from .gae import compute_gae
from .ppo import RolloutBatch, flatten_rollout, ppo_update
from .replay import ReplayBuffer
from .sac import (SacAgent, make_sac_agent, polyak_update, q_target_values,
                  sac_actor_step, sac_q_step, sample_next_actions)

ACTION_DIMS = {"robot": 7, "human": 3}


# ---------------------------------------------------------------------------
# partner providers

class ZeroPartner:
    """Inactive human: zero torques, healthy profile."""

    action_dim = ACTION_DIMS["human"]

    def profiles(self, n: int) -> list[DisabilityProfile]:
        return [DisabilityProfile()] * n

    def before_step(self, batch, rng) -> None:
        pass

    def act(self, obs: np.ndarray, rng) -> np.ndarray:
        return np.zeros((obs.shape[0], self.action_dim))

    def eval_act(self, obs: np.ndarray) -> np.ndarray:
        return np.zeros((obs.shape[0], self.action_dim))


class FixedPartner:
    """One frozen policy acting for the whole batch."""

    def __init__(self, policy: PolicyParams,
                 profile: DisabilityProfile | None = None):
        self.policy = policy
        self.profile = profile or DisabilityProfile()

    def profiles(self, n: int) -> list[DisabilityProfile]:
        return [self.profile] * n

    def before_step(self, batch, rng) -> None:
        pass

    def act(self, obs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        mu, logstd, _ = self.policy.mu_logstd(obs)
        action, *_ = policy_sample(self.policy.head, mu, logstd, rng)
        return action

    def eval_act(self, obs: np.ndarray) -> np.ndarray:
        mu, _, _ = self.policy.mu_logstd(obs)
        return policy_mean_action(self.policy.head, mu)


class PopulationPartner:
    """Per-instance frozen partners resampled uniformly at every reset."""

    def __init__(self, policies: list[PolicyParams],
                 profiles: list[DisabilityProfile], horizon: int = HORIZON):
        if len(policies) != len(profiles) or not policies:
            raise ContractViolationError("policies/profiles mismatch")
        self.policies = policies
        self.partner_profiles = profiles
        self.horizon = horizon
        self.ids: np.ndarray | None = None
        self.draw_log: list[int] = []

    def initial_assignment(self, n: int, rng: np.random.Generator):
        self.ids = rng.integers(0, len(self.policies), size=n)
        self.draw_log.extend(int(i) for i in self.ids)
        return [self.partner_profiles[i] for i in self.ids]

    def profiles(self, n: int) -> list[DisabilityProfile]:
        if self.ids is None:
            raise ContractViolationError("initial_assignment not called")
        return [self.partner_profiles[i] for i in self.ids]

    def before_step(self, batch, rng: np.random.Generator) -> None:
        resetting = batch.core.t == (batch.horizon - 1)
        if not resetting.any():
            return
        fresh = rng.integers(0, len(self.policies), size=int(resetting.sum()))
        self.ids = self.ids.copy()
        self.ids[resetting] = fresh
        self.draw_log.extend(int(i) for i in fresh)
        for arr, attr in ((batch.prof.strength, "strength_multiplier"),
                          (batch.prof.rom, "elbow_rom_fraction"),
                          (batch.prof.tremor_amp, "tremor_amplitude"),
                          (batch.prof.tremor_tau, "tremor_timescale")):
            arr[resetting] = [getattr(self.partner_profiles[i], attr)
                              for i in self.ids[resetting]]
        # keep the vectorized core's profile arrays in sync
        batch.core.prof = batch.prof

    def act(self, obs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        out = np.zeros((obs.shape[0], ACTION_DIMS["human"]))
        for pid in np.unique(self.ids):
            rows = self.ids == pid
            policy = self.policies[pid]
            mu, logstd, _ = policy.mu_logstd(obs[rows])
            action, *_ = policy_sample(policy.head, mu, logstd, rng)
            out[rows] = action
        return out

    def eval_act(self, obs: np.ndarray) -> np.ndarray:
        out = np.zeros((obs.shape[0], ACTION_DIMS["human"]))
        for pid in np.unique(self.ids):
            rows = self.ids == pid
            policy = self.policies[pid]
            mu, _, _ = policy.mu_logstd(obs[rows])
            out[rows] = policy_mean_action(policy.head, mu)
        return out


# ---------------------------------------------------------------------------
# evaluation

def deterministic_actor(policy: PolicyParams):
    def act(obs: np.ndarray) -> np.ndarray:
        mu, _, _ = policy.mu_logstd(obs)
        return policy_mean_action(policy.head, mu)
    return act


def evaluate_team(task: TaskId, act_fns: dict, n_episodes: int, seed: int,
                  profiles=None, weights: RewardWeights = DEFAULT_REWARD_WEIGHTS,
                  sim_cfg: SimConfig = DEFAULT_SIM_CONFIG,
                  horizon: int = HORIZON) -> np.ndarray:
    """Deterministic-policy episode returns, one instance per episode."""
    batch, obs = vreset(task, n_episodes, seed, profiles=profiles,
                        cfg=sim_cfg, weights=weights, horizon=horizon)
    returns = np.zeros(n_episodes)
    for _ in range(horizon):
        actions = np.concatenate(
            [act_fns["robot"](obs), act_fns["human"](obs)], axis=1)
        batch, obs, rewards, dones, finals = vstep(batch, actions)
        for i, ret in finals:
            returns[i] = ret
    return returns


@dataclass
class TeamResult:
    checkpoints: dict[str, PolicyParams]
    runlog: RunLog
    final_eval_returns: list[float] = field(default_factory=list)
    failed: bool = False
    fail_reason: str = ""
    extra: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# PPO team trainer

def _collect_ppo_rollout(batch, obs, actors, critics, provider, cfg, rng,
                         learners, centralized):
    T, n = cfg.rollout_steps, batch.n
    obs_dim = obs.shape[1]
    store_obs = {r: np.empty((T, n, obs_dim)) for r in learners}
    store_crit = {r: np.empty((T, n, obs_dim * (2 if centralized else 1)))
                  for r in learners}
    store_act = {r: np.empty((T, n, ACTION_DIMS[r])) for r in learners}
    store_logp = {r: np.empty((T, n)) for r in learners}
    store_val = {r: np.empty((T, n)) for r in learners}
    rewards = np.empty((T, n))
    dones = np.empty((T, n))
    for t in range(T):
        provider.before_step(batch, rng)
        actions = {}
        for role in ROLES:
            if role in learners:
                mu, logstd, _ = actors[role].mu_logstd(obs)
                a, logp = policy_sample(actors[role].head, mu, logstd, rng)
                crit_in = np.concatenate([obs, obs], axis=1) if centralized else obs
                v, _ = critics[role].value(crit_in)
                store_obs[role][t] = obs
                store_crit[role][t] = crit_in
                store_act[role][t] = a
                store_logp[role][t] = logp
                store_val[role][t] = v
                actions[role] = a
            else:
                actions[role] = provider.act(obs, rng)
        batch, obs, r, d, _ = vstep(
            batch, np.concatenate([actions["robot"], actions["human"]], axis=1))
        rewards[t] = r
        dones[t] = d
    bootstrap = {}
    for role in learners:
        crit_in = np.concatenate([obs, obs], axis=1) if centralized else obs
        v, _ = critics[role].value(crit_in)
        bootstrap[role] = v
    rollout = RolloutBatch(obs=store_obs, critic_inputs=store_crit,
                           actions=store_act, log_probs=store_logp,
                           values=store_val, rewards=rewards, dones=dones,
                           bootstrap_values=bootstrap)
    return batch, obs, rollout


def _train_ppo_team(task, algorithm, spec, cfg: PpoConfig, total_steps, seed,
                    provider, eval_cadence, eval_episodes, run_id, weights,
                    sim_cfg, evaluator, result: TeamResult):
    rng = np.random.default_rng(derive_seed(seed, 1))
    learners = spec.learners
    centralized = spec.critic_mode == "centralized"
    obs_dim = observation_dim(task)
    critic_dim = obs_dim * (2 if centralized else 1)
    actors, critics, adam_a, adam_c = {}, {}, {}, {}
    for i, role in enumerate(learners):
        actors[role] = policy_init(obs_dim, ACTION_DIMS[role], "ppo",
                                   np.random.default_rng(derive_seed(seed, 10 + i)))
        critics[role] = critic_init(critic_dim,
                                    np.random.default_rng(derive_seed(seed, 20 + i)))
        lr = cfg.lr
        adam_a[role] = AdamState.init(actors[role].arrays(), lr, cfg.adam_eps)
        adam_c[role] = AdamState.init(critics[role].arrays(), lr, cfg.adam_eps)

    batch, obs = vreset(task, cfg.num_envs, derive_seed(seed, 2),
                        profiles=provider.profiles(cfg.num_envs),
                        cfg=sim_cfg, weights=weights)
    runlog = result.runlog
    t0 = time.perf_counter()
    global_step = 0
    next_eval = 0
    updates_done = 0
    total_updates = max(1, total_steps // (cfg.rollout_steps * cfg.num_envs))
    while global_step < total_steps:
        if eval_cadence and global_step >= next_eval:
            _log_eval(runlog, evaluator, actors, global_step, t0)
            next_eval += eval_cadence
        if cfg.anneal_lr:
            frac = 1.0 - updates_done / total_updates
            for role in learners:
                adam_a[role].lr = cfg.lr * frac
                adam_c[role].lr = cfg.lr * frac
        batch, obs, rollout = _collect_ppo_rollout(
            batch, obs, actors, critics, provider, cfg, rng, learners,
            centralized)
        global_step += cfg.rollout_steps * cfg.num_envs
        for role in learners:
            adv, targets = compute_gae(rollout.rewards, rollout.values[role],
                                       rollout.dones,
                                       rollout.bootstrap_values[role],
                                       cfg.gamma, cfg.gae_lambda)
            agent_view = flatten_rollout(rollout, role, adv, targets)
            actors[role], critics[role], adam_a[role], adam_c[role], _ = ppo_update(
                actors[role], critics[role], adam_a[role], adam_c[role],
                agent_view, cfg, rng)
        updates_done += 1
    if total_steps > 0:
        result.final_eval_returns = _log_eval(runlog, evaluator, actors,
                                              global_step, t0)
    result.checkpoints = dict(actors)


# ---------------------------------------------------------------------------
# SAC team trainer

def _train_sac_team(task, algorithm, spec, cfg: SacConfig, total_steps, seed,
                    provider, eval_cadence, eval_episodes, run_id, weights,
                    sim_cfg, evaluator, result: TeamResult):
    rng = np.random.default_rng(derive_seed(seed, 1))
    learners = spec.learners
    centralized = spec.critic_mode == "centralized"
    obs_dim = observation_dim(task)
    joint_act = sum(ACTION_DIMS[r] for r in ROLES)
    agents: dict[str, SacAgent] = {}
    for i, role in enumerate(learners):
        q_in = (2 * obs_dim + joint_act) if centralized else (obs_dim + ACTION_DIMS[role])
        agents[role] = make_sac_agent(role, obs_dim, ACTION_DIMS[role], q_in,
                                      cfg, np.random.default_rng(derive_seed(seed, 10 + i)))

    buffer = ReplayBuffer(cfg.buffer_size, {
        "obs": obs_dim, "next_obs": obs_dim,
        "act_robot": ACTION_DIMS["robot"], "act_human": ACTION_DIMS["human"],
        "reward": 1, "done": 1,
    })
    batch, obs = vreset(task, cfg.num_envs, derive_seed(seed, 2),
                        profiles=provider.profiles(cfg.num_envs),
                        cfg=sim_cfg, weights=weights)
    runlog = result.runlog
    t0 = time.perf_counter()
    global_step = 0
    next_eval = 0
    q_updates = 0
    while global_step < total_steps:
        if eval_cadence and global_step >= next_eval:
            _log_eval(runlog, evaluator, {r: a.policy for r, a in agents.items()},
                      global_step, t0)
            next_eval += eval_cadence
        for _ in range(cfg.rollout_length):
            provider.before_step(batch, rng)
            actions = {}
            for role in ROLES:
                if role in learners:
                    if global_step < cfg.exploration_steps:
                        actions[role] = rng.uniform(-1.0, 1.0,
                                                    (batch.n, ACTION_DIMS[role]))
                    else:
                        mu, logstd, _ = agents[role].policy.mu_logstd(obs)
                        a, _, _ = policy_sample(agents[role].policy.head, mu,
                                                logstd, rng)
                        actions[role] = a
                else:
                    actions[role] = provider.act(obs, rng)
            joint = np.concatenate([actions["robot"], actions["human"]], axis=1)
            batch, next_obs, rewards, dones, _ = vstep(batch, joint)
            buffer.add_batch({
                "obs": obs, "next_obs": next_obs,
                "act_robot": np.clip(actions["robot"], -1, 1),
                "act_human": np.clip(actions["human"], -1, 1),
                "reward": rewards, "done": dones.astype(np.float64),
            })
            obs = next_obs
            global_step += batch.n
        if global_step < cfg.exploration_steps or buffer.size < cfg.batch_size:
            continue
        for _ in range(cfg.updates_per_iteration):
            sample = buffer.sample(cfg.batch_size, rng)
            _sac_update_once(agents, sample, cfg, rng, centralized,
                             update_actor=(q_updates % cfg.policy_delay == 0))
            q_updates += 1
    if total_steps > 0:
        result.final_eval_returns = _log_eval(
            runlog, evaluator, {r: a.policy for r, a in agents.items()},
            global_step, t0)
    result.checkpoints = {r: a.policy for r, a in agents.items()}


def _sac_update_once(agents: dict[str, SacAgent], sample: dict, cfg: SacConfig,
                     rng: np.random.Generator, centralized: bool,
                     update_actor: bool):
    """One Q regression per agent (and actor/alpha/target updates in turn)."""
    rewards = sample["reward"][:, 0]
    dones = sample["done"][:, 0]
    next_actions, next_logps = {}, {}
    for role, agent in agents.items():
        a, logp = sample_next_actions(agent, sample["next_obs"], rng)
        next_actions[role] = a
        next_logps[role] = logp
    for role, agent in agents.items():
        if centralized:
            # joint order is (robot, human); both roles learn in MASAC
            next_in = np.concatenate(
                [sample["next_obs"], sample["next_obs"],
                 next_actions["robot"], next_actions["human"]], axis=1)
            q_in = np.concatenate(
                [sample["obs"], sample["obs"],
                 sample["act_robot"], sample["act_human"]], axis=1)
        else:
            next_in = np.concatenate([sample["next_obs"], next_actions[role]], axis=1)
            q_in = np.concatenate([sample["obs"], sample[f"act_{role}"]], axis=1)
        y = q_target_values(agent, next_in, next_logps[role], rewards, dones,
                            cfg.gamma)
        sac_q_step(agent, q_in, y, cfg.max_grad_norm)
        agent.q1_target = polyak_update(agent.q1_target, agent.q1, cfg.tau)
        agent.q2_target = polyak_update(agent.q2_target, agent.q2, cfg.tau)
    if update_actor:
        fresh = {}
        for role, agent in agents.items():
            mu, logstd, _ = agent.policy.mu_logstd(sample["obs"])
            a, _, _ = policy_sample(agent.policy.head, mu, logstd, rng)
            fresh[role] = a
        for role, agent in agents.items():
            if centralized:
                prefix = np.concatenate([sample["obs"], sample["obs"]], axis=1)
                if role == "robot":
                    before, after = None, fresh.get("human", sample["act_human"])
                else:
                    before, after = fresh.get("robot", sample["act_robot"]), None
            else:
                prefix, before, after = sample["obs"], None, None
            sac_actor_step(agent, sample["obs"], prefix, before, after, cfg, rng)


# ---------------------------------------------------------------------------
# entry point

def _log_eval(runlog: RunLog, evaluator, actors, env_step: int, t0: float):
    last_returns = []
    for label, returns in evaluator(actors).items():
        returns = list(map(float, returns))
        lo, hi = stratified_bootstrap_ci([returns], resamples=400,
                                         rng=len(runlog.rows))
        runlog.rows.append({
            "run_id": runlog.run_id if not label else f"{runlog.run_id}:{label}",
            "task": runlog.task,
            "algorithm": runlog.algorithm,
            "seed": runlog.seed,
            "env_step": int(env_step),
            "eval_return_iqm": float(iqm(returns)),
            "eval_return_ci_lo": float(lo),
            "eval_return_ci_hi": float(hi),
            "wallclock_s": float(time.perf_counter() - t0),
        })
        if not label:
            last_returns = returns
    return last_returns


def train_team(task, algorithm: str, spec: TeamSpec | None = None,
               cfg=None, total_steps: int = 0, seed: int = 0, *,
               disability: DisabilityProfile | None = None,
               eval_cadence: int = 100_000, eval_episodes: int = 8,
               run_id: str | None = None,
               weights: RewardWeights = DEFAULT_REWARD_WEIGHTS,
               sim_cfg: SimConfig = DEFAULT_SIM_CONFIG,
               partner_provider=None, evaluator=None) -> TeamResult:
    """Train a team and return checkpoints plus the run log.

    Deterministic given `seed` (the wallclock column aside).  Divergence
    marks the result failed and preserves the partial log.
    """
    task = TaskId.parse(task)
    algorithm = algorithm.lower()
    spec = spec or team_spec_for(algorithm)
    cfg = cfg or default_config(algorithm)
    expected = PpoConfig if is_ppo(algorithm) else SacConfig
    if not isinstance(cfg, expected):
        raise ContractViolationError(
            f"{algorithm} expects {expected.__name__}, got {type(cfg).__name__}")
    run_id = run_id or f"{algorithm}-{task.value}-s{seed}"

    provider = partner_provider
    if provider is None:
        if "human" in spec.learners:
            provider = ZeroPartner()   # unused; both roles act through actors
        elif "human" in spec.fixed_partners:
            policy, meta = load_policy(spec.fixed_partners["human"])
            prof = meta.get("disability") or {}
            provider = FixedPartner(policy, DisabilityProfile(**prof))
        else:
            provider = ZeroPartner()
    if disability is not None and not isinstance(provider, (PopulationPartner, FixedPartner)):
        base_profile = disability
    else:
        base_profile = None
    if base_profile is not None:
        provider = _ProfileWrapper(provider, base_profile)

    result = TeamResult(checkpoints={},
                        runlog=RunLog(run_id=run_id, task=task.value,
                                      algorithm=algorithm, seed=seed))
    if evaluator is None:
        evaluator = _default_evaluator(task, spec, provider, seed,
                                       eval_episodes, weights, sim_cfg)
    trainer = _train_ppo_team if is_ppo(algorithm) else _train_sac_team
    try:
        trainer(task, algorithm, spec, cfg, total_steps, seed, provider,
                eval_cadence, eval_episodes, run_id, weights, sim_cfg,
                evaluator, result)
    except SimulationFaultError as err:
        result.failed = True
        result.fail_reason = str(err)
    return result


class _ProfileWrapper:
    """Imposes a fixed disability profile on top of any provider."""

    def __init__(self, inner, profile: DisabilityProfile):
        self.inner = inner
        self.profile = profile

    def profiles(self, n: int):
        return [self.profile] * n

    def before_step(self, batch, rng):
        self.inner.before_step(batch, rng)

    def act(self, obs, rng):
        return self.inner.act(obs, rng)

    def eval_act(self, obs):
        return self.inner.eval_act(obs)


def _default_evaluator(task, spec, provider, seed, eval_episodes, weights,
                       sim_cfg):
    counter = {"k": 0}

    def evaluate(actors: dict[str, PolicyParams]):
        counter["k"] += 1
        act_fns = {}
        for role in ROLES:
            if role in actors:
                act_fns[role] = deterministic_actor(actors[role])
            else:
                act_fns[role] = provider.eval_act
        profiles = provider.profiles(eval_episodes)
        returns = evaluate_team(task, act_fns, eval_episodes,
                                derive_seed(seed, 0xE000 + counter["k"]),
                                profiles=profiles, weights=weights,
                                sim_cfg=sim_cfg)
        return {"": list(returns)}

    return evaluate
