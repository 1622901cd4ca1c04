"""Batched stepping of N independent task instances with auto-reset.

The batch owns one structure-of-arrays core; stepping is data-parallel via
numpy and deterministic for any batch size: instance i's trajectory depends
only on its own derived seed, so an 8-wide batch reproduces eight sequential
single-instance runs bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .envs import (DEFAULT_REWARD_WEIGHTS, DisabilityProfile, HORIZON,
                   RewardWeights, TaskId)
from .envs.kernels import (BatchCore, ProfileArrays, merge_reset,
                           observe, reset_batch, step_batch)
from .errors import ContractViolationError
from .rng import RngStream, derive_seed
from .simcore import DEFAULT_SIM_CONFIG, SimConfig

ACTION_DIM = 10  # 7 robot + 3 human


@dataclass
class BatchState:
    """N instances of one task plus per-instance running returns."""

    task: TaskId
    core: BatchCore
    prof: ProfileArrays
    episode_returns: np.ndarray
    cfg: SimConfig = DEFAULT_SIM_CONFIG
    weights: RewardWeights = DEFAULT_REWARD_WEIGHTS
    horizon: int = HORIZON

    @property
    def n(self) -> int:
        return self.core.n


def _profile_arrays(profiles, n: int) -> ProfileArrays:
    if profiles is None:
        return ProfileArrays.broadcast(DisabilityProfile(), n)
    if isinstance(profiles, DisabilityProfile):
        return ProfileArrays.broadcast(profiles, n)
    profiles = list(profiles)
    if len(profiles) != n:
        raise ContractViolationError(
            f"need {n} profiles, got {len(profiles)}")
    return ProfileArrays.from_profiles(profiles)


def vreset(task, n: int, base_seed: int, profiles=None,
           cfg: SimConfig = DEFAULT_SIM_CONFIG,
           weights: RewardWeights = DEFAULT_REWARD_WEIGHTS,
           horizon: int = HORIZON):
    """Batch of n instances; instance i is seeded from (base_seed, i).

    Returns (BatchState, stacked observations).
    """
    if n < 1:
        raise ContractViolationError("n must be >= 1")
    task = TaskId.parse(task)
    prof = _profile_arrays(profiles, n)
    rng = RngStream([derive_seed(base_seed, i) for i in range(n)])
    core = reset_batch(task, rng, prof, cfg)
    obs = observe(core, cfg)
    batch = BatchState(task=task, core=core, prof=prof,
                       episode_returns=np.zeros(n), cfg=cfg, weights=weights,
                       horizon=horizon)
    return batch, obs


def vstep(batch: BatchState, actions: np.ndarray):
    """Step every instance; done instances auto-reset in place.

    `actions` is (N, 10): the robot's normalized action then the human's.  For a
    slot that finished this step, the returned observation row is the
    post-reset observation and the completed episode's return is surfaced in
    `final_returns` as (instance_index, return) pairs.

    Returns (batch, obs, rewards, dones, final_returns); the batch is
    modified in place and returned for convenience.
    """
    actions = np.asarray(actions, dtype=np.float64)
    if actions.shape != (batch.n, ACTION_DIM):
        raise ContractViolationError(
            f"actions must be ({batch.n}, {ACTION_DIM}), got {actions.shape}")
    core = batch.core
    obs, rewards, dones = step_batch(core, actions[:, :7], actions[:, 7:],
                                     batch.cfg, batch.weights, batch.horizon)
    batch.episode_returns += rewards
    final_returns = []
    if dones.any():
        idx = np.nonzero(dones)[0]
        final_returns = [(int(i), float(batch.episode_returns[i])) for i in idx]
        batch.episode_returns[idx] = 0.0
        # draw reset values for every row from each instance's own stream,
        # then restore the streams of rows that did not finish
        saved = core.rng.state.copy()
        fresh = reset_batch(batch.task, core.rng, batch.prof, batch.cfg)
        core.rng.state[~dones] = saved[~dones]
        merge_reset(core, fresh, dones, batch.cfg)
        post = observe(core, batch.cfg)
        obs[dones] = post[dones]
    return batch, obs, rewards, dones, final_returns
