"""Generalized advantage estimation over time-major arrays."""

from __future__ import annotations

import numpy as np

from ..errors import ContractViolationError


def compute_gae(rewards, values, dones, bootstrap_value, gamma: float,
                lam: float):
    """delta_t = r_t + gamma*(1-done_t)*V_{t+1} - V_t, recursed with gamma*lam.

    Arrays are (T,) or (T, N); `bootstrap_value` supplies V_{T}.  Returns raw
    (advantages, value_targets); normalization happens per minibatch in the
    PPO update.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    if rewards.shape != values.shape or rewards.shape != dones.shape:
        raise ContractViolationError("rewards/values/dones shapes differ")
    horizon = rewards.shape[0]
    advantages = np.zeros_like(rewards)
    last = np.zeros_like(np.asarray(bootstrap_value, dtype=np.float64))
    next_value = np.asarray(bootstrap_value, dtype=np.float64)
    for t in range(horizon - 1, -1, -1):
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * nonterminal * next_value - values[t]
        last = delta + gamma * lam * nonterminal * last
        advantages[t] = last
        next_value = values[t]
    return advantages, advantages + values
