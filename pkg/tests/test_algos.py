import numpy as np
import pytest

from duetrl.algos import (PpoConfig, ReplayBuffer, SacConfig,
                          compute_gae, default_config, make_sac_agent,
                          normalize_advantages, polyak_update,
                          ppo_actor_loss_and_grad, q_target_values,
                          sac_q_step, team_spec_for, train_team,
                          with_overrides)
from duetrl.errors import ContractViolationError
from duetrl.neural import (critic_init, gaussian_log_prob, policy_init,
                           policy_sample)


# ---------------------------------------------------------------------------
# configuration defaults (the tuned tables)

def test_ippo_defaults_match_tables():
    cfg = PpoConfig.ippo_defaults()
    assert (cfg.rollout_steps, cfg.num_envs, cfg.epochs, cfg.minibatches) == (64, 1024, 4, 4)
    assert cfg.lr == 1e-3 and cfg.anneal_lr is False
    assert cfg.entropy_coef == 1e-4 and cfg.clip_eps == 0.31
    assert cfg.gamma == 0.99 and cfg.gae_lambda == 0.95
    assert cfg.value_coef == 1.0 and cfg.max_grad_norm == 0.5
    assert cfg.adam_eps == 1e-8


def test_mappo_defaults_match_tables():
    cfg = PpoConfig.mappo_defaults()
    assert cfg.rollout_steps == 128
    assert cfg.lr == 4.4e-3
    assert cfg.entropy_coef == 2.7e-4
    assert cfg.clip_eps == 0.11
    assert cfg.num_envs == 1024


def test_sac_defaults_match_tables():
    isac = SacConfig.isac_defaults()
    assert (isac.exploration_steps, isac.policy_delay) == (5000, 4)
    assert isac.buffer_size == 10 ** 6 and isac.batch_size == 128
    assert (isac.policy_lr, isac.q_lr, isac.alpha_lr) == (3e-4, 1e-3, 3e-4)
    assert isac.max_grad_norm == 10 and isac.tau == 0.005
    assert isac.updates_per_iteration == 32 and isac.rollout_length == 8
    assert isac.autotune and isac.target_entropy_scale == 5.0
    assert isac.initial_alpha == 0.1
    masac = SacConfig.masac_defaults()
    assert (masac.policy_lr, masac.q_lr) == (3e-4, 1e-4)
    assert masac.num_envs == 64


def test_team_specs():
    assert team_spec_for("ippo").critic_mode == "independent"
    assert team_spec_for("mappo").critic_mode == "centralized"
    assert team_spec_for("masac").critic_mode == "centralized"
    assert team_spec_for("ppo").learners == ("robot",)
    with pytest.raises(ContractViolationError):
        team_spec_for("dqn")
    with pytest.raises(ContractViolationError):
        with_overrides(PpoConfig(), nonsense=1)


# ---------------------------------------------------------------------------
# GAE

def test_gae_single_terminal_step():
    adv, targets = compute_gae(np.array([1.0]), np.array([0.0]),
                               np.array([1.0]), np.array(0.5), 0.99, 0.95)
    assert abs(adv[0] - 1.0) < 1e-12
    assert abs(targets[0] - 1.0) < 1e-12


def test_gae_hand_recursion():
    rewards = np.array([0.0, 1.0])
    values = np.array([0.5, 0.5])
    dones = np.array([0.0, 1.0])
    adv, _ = compute_gae(rewards, values, dones, np.array(7.7), 0.99, 0.95)
    assert abs(adv[1] - 0.5) < 1e-9
    assert abs(adv[0] - 0.46525) < 1e-9


def test_gae_telescopes_to_reward_to_go():
    rng = np.random.default_rng(0)
    rewards = rng.uniform(0, 1, 10)
    dones = np.zeros(10)
    dones[-1] = 1.0
    adv, _ = compute_gae(rewards, np.zeros(10), dones, np.array(0.0), 1.0, 1.0)
    to_go = np.cumsum(rewards[::-1])[::-1]
    assert np.allclose(adv, to_go, atol=1e-12)


def _gae_oracle(rewards, values, dones, bootstrap, gamma, lam):
    # direct forward sum: A_t = sum_l (gamma*lam)^l * delta_{t+l}, truncated
    # at the first done
    T = len(rewards)
    vals = np.append(values, bootstrap)
    adv = np.zeros(T)
    for t in range(T):
        acc, w = 0.0, 1.0
        for l in range(t, T):
            delta = rewards[l] + gamma * (1 - dones[l]) * vals[l + 1] - vals[l]
            acc += w * delta
            if dones[l]:
                break
            w *= gamma * lam
        adv[t] = acc
    return adv


def test_gae_matches_bruteforce_oracle():
    rng = np.random.default_rng(1)
    for _ in range(100):
        T = 50
        rewards = rng.standard_normal(T)
        values = rng.standard_normal(T)
        dones = (rng.uniform(size=T) < 0.05).astype(float)
        bootstrap = rng.standard_normal()
        gamma, lam = rng.uniform(0.9, 1.0), rng.uniform(0.8, 1.0)
        adv, targets = compute_gae(rewards, values, dones, np.array(bootstrap),
                                   gamma, lam)
        oracle = _gae_oracle(rewards, values, dones, bootstrap, gamma, lam)
        assert np.max(np.abs(adv - oracle)) < 1e-6
        assert np.allclose(targets, adv + values, atol=1e-12)


# ---------------------------------------------------------------------------
# PPO update semantics

def _ppo_setup(seed=0, B=32, do=6, da=3):
    rng = np.random.default_rng(seed)
    policy = policy_init(do, da, "ppo", rng)
    policy.logstd[:] = rng.uniform(-1, 0, da)
    obs = rng.standard_normal((B, do))
    mu, logstd, _ = policy.mu_logstd(obs)
    actions, logp = policy_sample(policy.head, mu, logstd,
                                  np.random.default_rng(seed + 1))
    return policy, obs, actions, logp


def test_clipped_ratio_enters_surrogate():
    # ratio 1.5 with positive advantage and eps via the tuned value 0.31:
    # the clipped branch 1.31 * A is the active term
    policy, obs, actions, logp = _ppo_setup()
    logp_old = logp - np.log(1.5)    # makes ratio exactly 1.5
    adv = np.ones(len(obs))
    loss, _, _ = ppo_actor_loss_and_grad(policy, obs, actions, logp_old, adv,
                                         clip_eps=0.31, entropy_coef=0.0)
    assert abs(loss - (-1.31)) < 1e-9


def test_ratio_one_equals_vanilla_policy_gradient():
    policy, obs, actions, logp = _ppo_setup(seed=3)
    adv = np.random.default_rng(4).standard_normal(len(obs))
    _, grads, _ = ppo_actor_loss_and_grad(policy, obs, actions, logp, adv,
                                          clip_eps=0.31, entropy_coef=0.0)
    # finite differences of the vanilla objective -mean(A * log pi)
    h = 1e-6
    worst = 0.0
    for ai, arr in enumerate(policy.arrays()):
        for k in range(0, arr.size, max(1, arr.size // 40)):
            orig = arr.flat[k]

            def vanilla():
                mu, logstd, _ = policy.mu_logstd(obs)
                return -float(np.mean(adv * gaussian_log_prob(mu, logstd, actions)))

            arr.flat[k] = orig + h
            lp = vanilla()
            arr.flat[k] = orig - h
            lm = vanilla()
            arr.flat[k] = orig
            fd = (lp - lm) / (2 * h)
            worst = max(worst, abs(fd - grads[ai].flat[k])
                        / max(1e-5, abs(fd) + abs(grads[ai].flat[k])))
    assert worst < 1e-4


def test_zero_advantage_moves_only_logstd():
    policy, obs, actions, logp = _ppo_setup(seed=5)
    adv = np.zeros(len(obs))
    _, grads, _ = ppo_actor_loss_and_grad(policy, obs, actions, logp, adv,
                                          clip_eps=0.31, entropy_coef=1e-2)
    for g in grads[:-1]:
        assert np.all(g == 0.0)
    assert np.allclose(grads[-1], -1e-2, atol=1e-15)


def test_surrogate_clip_bound_property():
    rng = np.random.default_rng(6)
    eps = 0.31
    for _ in range(200):
        ratio = rng.uniform(0.2, 2.5)
        adv = rng.standard_normal()
        clipped = np.clip(ratio, 1 - eps, 1 + eps)
        surr = min(ratio * adv, clipped * adv)
        assert surr <= ratio * adv + 1e-12
        if adv > 0 and ratio > 1 + eps:
            assert abs(surr - (1 + eps) * adv) < 1e-12
            assert surr < ratio * adv


def test_advantage_normalization():
    rng = np.random.default_rng(7)
    adv = rng.standard_normal(512) * 3.1 + 0.7
    norm = normalize_advantages(adv)
    assert abs(norm.mean()) < 1e-6
    assert abs(norm.std() - 1.0) < 1e-3


# ---------------------------------------------------------------------------
# SAC pieces

def _agent(seed=0, obs_dim=6, act_dim=3, q_in=9):
    cfg = SacConfig.isac_defaults()
    return make_sac_agent("robot", obs_dim, act_dim, q_in, cfg,
                          np.random.default_rng(seed)), cfg


def test_q_target_myopic_when_gamma_zero_alpha_zero():
    agent, _ = _agent()
    agent.log_alpha = np.array([-np.inf])
    rng = np.random.default_rng(1)
    next_in = rng.standard_normal((8, 9))
    rewards = rng.standard_normal(8)
    y = q_target_values(agent, next_in, rng.standard_normal(8), rewards,
                        np.zeros(8), gamma=0.0)
    assert np.array_equal(y, rewards)


def test_q_target_matches_hand_computation():
    agent, _ = _agent(seed=2)
    rng = np.random.default_rng(3)
    # a hand-built two-transition batch
    next_obs = rng.standard_normal((2, 6))
    next_act = rng.uniform(-1, 1, (2, 3))
    next_in = np.concatenate([next_obs, next_act], axis=1)
    next_logp = rng.standard_normal(2)
    rewards = np.array([1.0, -0.5])
    dones = np.array([0.0, 1.0])
    gamma = 0.97
    y = q_target_values(agent, next_in, next_logp, rewards, dones, gamma)

    # independent evaluation through raw matmuls
    def qval(critic, x):
        h = np.tanh(x @ critic.mlp.weights[0] + critic.mlp.biases[0])
        h = np.tanh(h @ critic.mlp.weights[1] + critic.mlp.biases[1])
        return (h @ critic.mlp.weights[2] + critic.mlp.biases[2])[:, 0]

    soft = np.minimum(qval(agent.q1_target, next_in),
                      qval(agent.q2_target, next_in)) - agent.alpha * next_logp
    oracle = rewards + gamma * (1 - dones) * soft
    assert np.max(np.abs(y - oracle)) < 1e-6


def test_polyak_full_copy_at_tau_one():
    agent, _ = _agent(seed=4)
    # push online away from target first
    for arr in agent.q1.arrays():
        arr += 1.0
    target = polyak_update(agent.q1_target, agent.q1, tau=1.0)
    for a, b in zip(target.arrays(), agent.q1.arrays()):
        assert np.array_equal(a, b)


def test_q_regression_drives_bellman_residual_down():
    # frozen behavior data and frozen targets: full-batch regression on a
    # fixed y must reduce the residual monotonically over the first 100 steps
    rng = np.random.default_rng(5)
    agent, cfg = _agent(seed=6)
    x = rng.standard_normal((128, 9))
    y = rng.standard_normal(128)

    def residual():
        v1, _ = agent.q1.value(x)
        v2, _ = agent.q2.value(x)
        return 0.5 * float(np.mean((v1 - y) ** 2) + np.mean((v2 - y) ** 2))

    prev = residual()
    for _ in range(100):
        sac_q_step(agent, x, y, max_grad_norm=10.0)
        now = residual()
        assert now <= prev + 1e-9
        prev = now


# ---------------------------------------------------------------------------
# replay buffer

def test_replay_overwrites_oldest():
    buf = ReplayBuffer(4, {"x": 1})
    buf.add_batch({"x": np.arange(6, dtype=float)[:, None]})
    assert buf.size == 4
    stored = sorted(buf._store["x"][:, 0].tolist())
    assert stored == [2.0, 3.0, 4.0, 5.0]


def test_replay_uniform_sampling():
    n = 500
    buf = ReplayBuffer(n, {"x": 1})
    buf.add_batch({"x": np.arange(n, dtype=float)[:, None]})
    rng = np.random.default_rng(8)
    draws = 200_000
    idx = np.concatenate([buf.sample_indices(n, rng)
                          for _ in range(draws // n)])
    counts = np.bincount(idx, minlength=n)
    expected = draws / n
    sigma = np.sqrt(draws * (1 / n) * (1 - 1 / n))
    assert np.all(np.abs(counts - expected) < 3.5 * sigma + 1e-9)


def test_replay_underfilled_rejected():
    buf = ReplayBuffer(100, {"x": 1})
    buf.add_batch({"x": np.zeros((10, 1))})
    with pytest.raises(ContractViolationError):
        buf.sample(32, np.random.default_rng(0))


# ---------------------------------------------------------------------------
# trainers

def test_train_team_zero_steps_contract():
    res = train_team("scratch", "ippo", total_steps=0, seed=1)
    assert not res.failed
    assert res.runlog.rows == []
    assert set(res.checkpoints) == {"robot", "human"}


def test_train_team_deterministic_runlog():
    cfg = with_overrides(PpoConfig.ippo_defaults(), num_envs=8, rollout_steps=16)
    logs = []
    for _ in range(2):
        res = train_team("scratch", "ippo", cfg=cfg, total_steps=8 * 16 * 2,
                         seed=3, eval_cadence=8 * 16, eval_episodes=2)
        logs.append([{k: v for k, v in row.items() if k != "wallclock_s"}
                     for row in res.runlog.rows])
        assert not res.failed
    assert logs[0] == logs[1]


def test_shared_reward_streams_identical():
    from duetrl.algos.train import ZeroPartner, _collect_ppo_rollout
    from duetrl.neural import critic_init as ci, policy_init as pi
    from duetrl.vecenv import vreset
    cfg = with_overrides(PpoConfig.ippo_defaults(), num_envs=4, rollout_steps=8)
    rng = np.random.default_rng(0)
    actors = {r: pi(52, d, "ppo", rng) for r, d in (("robot", 7), ("human", 3))}
    critics = {r: ci(52, rng) for r in ("robot", "human")}
    batch, obs = vreset("scratch", 4, base_seed=0)
    provider = ZeroPartner()
    batch, obs, rollout = _collect_ppo_rollout(
        batch, obs, actors, critics, provider, cfg, rng,
        ("robot", "human"), centralized=False)
    # one shared stream serves both roles
    assert rollout.rewards.shape == (8, 4)
    assert np.array_equal(rollout.obs["robot"], rollout.obs["human"])


def test_masac_tiny_run_trains_both_roles():
    cfg = with_overrides(SacConfig.masac_defaults(), num_envs=4,
                         buffer_size=2000, exploration_steps=32,
                         batch_size=16, updates_per_iteration=2)
    res = train_team("armassist", "masac", cfg=cfg, total_steps=4 * 8 * 4,
                     seed=2, eval_cadence=0)
    assert not res.failed
    assert set(res.checkpoints) == {"robot", "human"}
    assert res.checkpoints["robot"].head.mode == "sac"


def test_sarl_sac_single_learner():
    cfg = with_overrides(SacConfig.isac_defaults(), num_envs=4,
                         buffer_size=1000, exploration_steps=32,
                         batch_size=16, updates_per_iteration=2)
    res = train_team("scratch", "sac", cfg=cfg, total_steps=4 * 8 * 3, seed=0,
                     eval_cadence=0)
    assert not res.failed
    assert set(res.checkpoints) == {"robot"}


def test_wrong_config_type_rejected():
    with pytest.raises(ContractViolationError):
        train_team("scratch", "ippo", cfg=SacConfig(), total_steps=0)


class _FaultingPartner:
    """Provider that poisons the simulation after a few steps."""

    def __init__(self):
        self.steps = 0

    def profiles(self, n):
        from duetrl.envs import DisabilityProfile
        return [DisabilityProfile()] * n

    def before_step(self, batch, rng):
        pass

    def act(self, obs, rng):
        self.steps += 1
        a = np.zeros((obs.shape[0], 3))
        if self.steps > 4:
            a[0, 0] = np.nan
        return a

    def eval_act(self, obs):
        return np.zeros((obs.shape[0], 3))


def test_divergence_marks_run_failed_with_partial_log():
    cfg = with_overrides(PpoConfig.ippo_defaults(), num_envs=4, rollout_steps=8)
    res = train_team("scratch", "ppo", cfg=cfg, total_steps=4 * 8 * 10, seed=0,
                     eval_cadence=4 * 8, eval_episodes=2,
                     partner_provider=_FaultingPartner())
    assert res.failed
    assert "non-finite" in res.fail_reason
    assert len(res.runlog.rows) >= 1   # the pre-fault eval row is preserved
