"""Training losses with analytic parameter gradients.

Each function runs its own forward pass and hand-derived backward pass and
returns (loss, grads, diagnostics) where grads align with the parameter
record's `arrays()` order.  The SAC actor loss is reparameterized: it takes
the Gaussian noise explicitly so the loss is a deterministic, finite-
differencable function of the parameters.
"""

from __future__ import annotations

import numpy as np

from ..neural import (CriticParams, PolicyParams, gaussian_entropy,
                      gaussian_log_prob, mlp_backward, tanh_correction)

_LOG_2PI = float(np.log(2.0 * np.pi))


def _logstd_mask(policy: PolicyParams, cache) -> np.ndarray:
    """1 where the (pre-clip) log-std lies strictly inside the head bounds."""
    head = policy.head
    if head.mode == "ppo":
        raw = policy.logstd
    else:
        raw = cache.preacts[-1][..., policy.action_dim:]
    return ((raw > head.logstd_min) & (raw < head.logstd_max)).astype(np.float64)


def ppo_actor_loss_and_grad(policy: PolicyParams, obs, actions, logp_old,
                            advantages, clip_eps: float, entropy_coef: float):
    """Clipped-surrogate policy loss minus the entropy bonus."""
    obs = np.asarray(obs, dtype=np.float64)
    actions = np.asarray(actions, dtype=np.float64)
    logp_old = np.asarray(logp_old, dtype=np.float64)
    adv = np.asarray(advantages, dtype=np.float64)
    n = obs.shape[0]

    mu, logstd, cache = policy.mu_logstd(obs)
    inv_std = np.exp(-logstd)
    z = (actions - mu) * inv_std
    logp = np.sum(-0.5 * z * z - logstd - 0.5 * _LOG_2PI, axis=-1)
    ratio = np.exp(logp - logp_old)
    clipped = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps)
    s1 = ratio * adv
    s2 = clipped * adv
    surrogate = np.minimum(s1, s2)
    entropy = gaussian_entropy(logstd)
    loss = -float(np.mean(surrogate)) - entropy_coef * float(np.mean(entropy))

    take1 = s1 <= s2
    inside = (ratio > 1.0 - clip_eps) & (ratio < 1.0 + clip_eps)
    dratio = np.where(take1, adv, adv * inside) * (-1.0 / n)
    dlogp = dratio * ratio
    dmu = dlogp[:, None] * z * inv_std
    dlogstd = dlogp[:, None] * (z * z - 1.0) - entropy_coef / n

    mask = _logstd_mask(policy, cache)
    mlp_grads, _ = mlp_backward(policy.mlp, cache, dmu)
    grads = mlp_grads + [np.sum(dlogstd * mask, axis=0)]
    diag = {
        "policy_loss": -float(np.mean(surrogate)),
        "entropy": float(np.mean(entropy)),
        "approx_kl": float(np.mean(logp_old - logp)),
        "clip_frac": float(np.mean(np.abs(ratio - 1.0) > clip_eps)),
    }
    return loss, grads, diag


def critic_loss_and_grad(critic: CriticParams, inputs, targets,
                         value_coef: float = 1.0):
    """value_coef * mean squared error of the scalar head."""
    inputs = np.asarray(inputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    n = inputs.shape[0]
    v, cache = critic.value(inputs)
    err = v - targets
    loss = value_coef * float(np.mean(err * err))
    dout = (value_coef * 2.0 / n) * err
    grads, _ = mlp_backward(critic.mlp, cache, dout[:, None])
    return loss, grads, {"value_loss": loss, "value_mean": float(np.mean(v))}


def sac_q_loss_and_grad(q: CriticParams, inputs, targets):
    return critic_loss_and_grad(q, inputs, targets, value_coef=1.0)


def sac_actor_loss_and_grad(policy: PolicyParams, q1: CriticParams,
                            q2: CriticParams, policy_obs, q_prefix,
                            act_before, act_after, eps, alpha: float):
    """mean(alpha * log pi(a|s) - min Q(s, a)) with a = tanh(mu + sigma*eps).

    The twin-Q input is concat(q_prefix, act_before, a, act_after); only the
    policy's own action block receives gradient.  `eps` is the fixed
    reparameterization noise.
    """
    policy_obs = np.asarray(policy_obs, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    n = policy_obs.shape[0]

    mu, logstd, cache = policy.mu_logstd(policy_obs)
    sigma = np.exp(logstd)
    u = mu + sigma * eps
    a = np.tanh(u)
    logp = gaussian_log_prob(mu, logstd, u) - tanh_correction(u)

    parts = [np.asarray(p, dtype=np.float64) for p in
             (q_prefix, act_before, a, act_after) if p is not None and np.size(p)]
    qin = np.concatenate(parts, axis=-1)
    a_offset = qin.shape[1] - a.shape[1] - (
        np.asarray(act_after).shape[-1] if act_after is not None and np.size(act_after) else 0)

    q1v, c1 = q1.value(qin)
    q2v, c2 = q2.value(qin)
    qmin = np.minimum(q1v, q2v)
    loss = float(np.mean(alpha * logp - qmin))

    take1 = (q1v <= q2v)
    dq = -1.0 / n
    _, din1 = mlp_backward(q1.mlp, c1, np.where(take1, dq, 0.0)[:, None])
    _, din2 = mlp_backward(q2.mlp, c2, np.where(take1, 0.0, dq)[:, None])
    din = din1 + din2
    da = din[:, a_offset:a_offset + a.shape[1]]
    du_q = da * (1.0 - a * a)

    dlogp = alpha / n
    dmu = dlogp * (2.0 * a) + du_q
    dlogstd = (dlogp * (-1.0 + 2.0 * a * sigma * eps)
               + du_q * sigma * eps)
    mask = _logstd_mask(policy, cache)
    dout = np.concatenate([dmu, dlogstd * mask], axis=-1)
    grads, _ = mlp_backward(policy.mlp, cache, dout)
    diag = {"actor_loss": loss, "mean_logp": float(np.mean(logp)),
            "mean_q": float(np.mean(qmin))}
    return loss, grads, diag


def alpha_loss_and_grad(log_alpha: float, logp, target_entropy: float):
    """Temperature objective mean(-log_alpha * (logp + target_entropy))."""
    logp = np.asarray(logp, dtype=np.float64)
    gap = float(np.mean(logp + target_entropy))
    return -log_alpha * gap, -gap
