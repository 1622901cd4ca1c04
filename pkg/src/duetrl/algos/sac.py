"""Twin-Q soft actor-critic machinery shared by ISAC, MASAC, and SARL SAC.

Each learning agent owns its actor, twin Q networks with Polyak-averaged
targets, and an auto-tuned temperature; nothing is shared between agents.
Centralized mode feeds the critics the concatenation of both agents'
observations and the joint action.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import SimulationFaultError
from ..neural import (AdamState, CriticParams, PolicyParams, adam_update,
                      critic_init, policy_init, policy_sample)
from .configs import SacConfig
from .losses import alpha_loss_and_grad, sac_actor_loss_and_grad, sac_q_loss_and_grad


@dataclass
class SacAgent:
    role: str
    policy: PolicyParams
    q1: CriticParams
    q2: CriticParams
    q1_target: CriticParams
    q2_target: CriticParams
    adam_policy: AdamState
    adam_q1: AdamState
    adam_q2: AdamState
    log_alpha: np.ndarray          # shape (1,)
    adam_alpha: AdamState
    target_entropy: float

    @property
    def alpha(self) -> float:
        return float(np.exp(self.log_alpha[0]))


def make_sac_agent(role: str, obs_dim: int, act_dim: int, q_input_dim: int,
                   cfg: SacConfig, rng: np.random.Generator) -> SacAgent:
    policy = policy_init(obs_dim, act_dim, "sac", rng)
    q1 = critic_init(q_input_dim, rng)
    q2 = critic_init(q_input_dim, rng)
    return SacAgent(
        role=role,
        policy=policy,
        q1=q1, q2=q2,
        q1_target=CriticParams(q1.mlp.copy()),
        q2_target=CriticParams(q2.mlp.copy()),
        adam_policy=AdamState.init(policy.arrays(), cfg.policy_lr),
        adam_q1=AdamState.init(q1.arrays(), cfg.q_lr),
        adam_q2=AdamState.init(q2.arrays(), cfg.q_lr),
        log_alpha=np.array([np.log(cfg.initial_alpha)]),
        adam_alpha=AdamState.init([np.zeros(1)], cfg.alpha_lr),
        target_entropy=-cfg.target_entropy_scale * act_dim,
    )


def polyak_update(target: CriticParams, online: CriticParams, tau: float) -> CriticParams:
    arrays = [tau * o + (1.0 - tau) * t
              for o, t in zip(online.arrays(), target.arrays())]
    return target.replace_arrays(arrays)


def q_target_values(agent: SacAgent, next_q_input: np.ndarray,
                    next_logp: np.ndarray, rewards: np.ndarray,
                    dones: np.ndarray, gamma: float) -> np.ndarray:
    """y = r + gamma * (1 - done) * (min target Q - alpha * log pi)."""
    q1v, _ = agent.q1_target.value(next_q_input)
    q2v, _ = agent.q2_target.value(next_q_input)
    soft = np.minimum(q1v, q2v) - agent.alpha * next_logp
    return rewards + gamma * (1.0 - dones) * soft


def sac_q_step(agent: SacAgent, q_input: np.ndarray, y: np.ndarray,
               max_grad_norm: float):
    """Regress both Q networks to the shared target; one Adam step each."""
    l1, g1, _ = sac_q_loss_and_grad(agent.q1, q_input, y)
    l2, g2, _ = sac_q_loss_and_grad(agent.q2, q_input, y)
    if not (np.isfinite(l1) and np.isfinite(l2)):
        raise SimulationFaultError(f"non-finite Q loss ({l1}, {l2})")
    new1, agent.adam_q1 = adam_update(agent.adam_q1, agent.q1.arrays(), g1, max_grad_norm)
    agent.q1 = agent.q1.replace_arrays(new1)
    new2, agent.adam_q2 = adam_update(agent.adam_q2, agent.q2.arrays(), g2, max_grad_norm)
    agent.q2 = agent.q2.replace_arrays(new2)
    return 0.5 * (l1 + l2)


def sac_actor_step(agent: SacAgent, policy_obs: np.ndarray, q_prefix: np.ndarray,
                   act_before, act_after, cfg: SacConfig,
                   rng: np.random.Generator):
    """Actor and temperature update with reparameterized noise."""
    eps = rng.standard_normal((policy_obs.shape[0], agent.policy.action_dim))
    loss, grads, diag = sac_actor_loss_and_grad(
        agent.policy, agent.q1, agent.q2, policy_obs, q_prefix,
        act_before, act_after, eps, agent.alpha)
    if not np.isfinite(loss):
        raise SimulationFaultError(f"non-finite SAC actor loss ({loss})")
    new_p, agent.adam_policy = adam_update(agent.adam_policy,
                                           agent.policy.arrays(), grads,
                                           cfg.max_grad_norm)
    agent.policy = agent.policy.replace_arrays(new_p)
    if cfg.autotune:
        _, dalpha = alpha_loss_and_grad(float(agent.log_alpha[0]),
                                        diag["mean_logp"], agent.target_entropy)
        new_la, agent.adam_alpha = adam_update(agent.adam_alpha,
                                               [agent.log_alpha],
                                               [np.array([dalpha])])
        agent.log_alpha = new_la[0]
    return diag


def sample_next_actions(agent: SacAgent, next_obs: np.ndarray,
                        rng: np.random.Generator):
    mu, logstd, _ = agent.policy.mu_logstd(next_obs)
    action, logp, _ = policy_sample(agent.policy.head, mu, logstd, rng)
    return action, logp
