"""Clipped-surrogate PPO update over collected rollouts."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import SimulationFaultError
from ..neural import AdamState, CriticParams, PolicyParams, adam_update
from .configs import PpoConfig
from .losses import critic_loss_and_grad, ppo_actor_loss_and_grad


@dataclass
class RolloutBatch:
    """Time-major on-policy data for one team update.

    The reward stream is shared by both agents; per-role arrays are keyed by
    role name.  `bootstrap_values` holds V(s_T) per learning role.
    """

    obs: dict[str, np.ndarray]              # (T, N, obs_dim)
    critic_inputs: dict[str, np.ndarray]    # (T, N, critic_dim)
    actions: dict[str, np.ndarray]          # (T, N, act_dim)
    log_probs: dict[str, np.ndarray]        # (T, N)
    values: dict[str, np.ndarray]           # (T, N)
    rewards: np.ndarray                     # (T, N) shared
    dones: np.ndarray                       # (T, N)
    bootstrap_values: dict[str, np.ndarray]  # (N,)


@dataclass
class AgentRollout:
    """Flattened per-agent view with advantages and value targets."""

    obs: np.ndarray
    critic_inputs: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    advantages: np.ndarray
    value_targets: np.ndarray


def flatten_rollout(batch: RolloutBatch, role: str, advantages, targets) -> AgentRollout:
    def flat(a):
        return a.reshape(-1, *a.shape[2:])
    return AgentRollout(
        obs=flat(batch.obs[role]),
        critic_inputs=flat(batch.critic_inputs[role]),
        actions=flat(batch.actions[role]),
        log_probs=flat(batch.log_probs[role]),
        advantages=flat(advantages),
        value_targets=flat(targets),
    )


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    if adv.size <= 1:
        return adv - adv.mean()
    return (adv - adv.mean()) / (adv.std() + 1e-8)


def ppo_update(actor: PolicyParams, critic: CriticParams,
               adam_actor: AdamState, adam_critic: AdamState,
               rollout: AgentRollout, cfg: PpoConfig,
               rng: np.random.Generator):
    """Epochs of shuffled minibatch updates; one Adam step per minibatch.

    Advantages are normalized within each minibatch.  Returns
    (actor, critic, adam_actor, adam_critic, diagnostics); raises
    SimulationFaultError on a non-finite loss.
    """
    n = rollout.obs.shape[0]
    mb_size = n // cfg.minibatches
    diag = {}
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        for m in range(cfg.minibatches):
            idx = perm[m * mb_size:(m + 1) * mb_size]
            adv = normalize_advantages(rollout.advantages[idx])
            a_loss, a_grads, a_diag = ppo_actor_loss_and_grad(
                actor, rollout.obs[idx], rollout.actions[idx],
                rollout.log_probs[idx], adv, cfg.clip_eps, cfg.entropy_coef)
            c_loss, c_grads, c_diag = critic_loss_and_grad(
                critic, rollout.critic_inputs[idx], rollout.value_targets[idx],
                cfg.value_coef)
            if not (np.isfinite(a_loss) and np.isfinite(c_loss)):
                raise SimulationFaultError(
                    f"non-finite PPO loss (actor={a_loss}, critic={c_loss})")
            new_a, adam_actor = adam_update(adam_actor, actor.arrays(),
                                            a_grads, cfg.max_grad_norm)
            actor = actor.replace_arrays(new_a)
            new_c, adam_critic = adam_update(adam_critic, critic.arrays(),
                                             c_grads, cfg.max_grad_norm)
            critic = critic.replace_arrays(new_c)
            diag = {**a_diag, **c_diag}
    return actor, critic, adam_actor, adam_critic, diag
