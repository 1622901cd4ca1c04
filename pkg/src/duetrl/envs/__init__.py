"""The three assistive tasks as two-agent shared-reward environments.

Public API is single-instance and value-typed: `reset` produces an EnvState,
`step` maps (state, actions) to a StepResult without mutating its input.
Batched execution lives in `duetrl.vecenv`, which drives the same kernels.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import ContractViolationError
from ..rng import RngStream
from ..simcore import ChainState, ContactInfo, DEFAULT_SIM_CONFIG, SimConfig
from . import kernels, scene
from .kernels import BatchCore, ProfileArrays, observation_dim
from .types import (DEFAULT_REWARD_WEIGHTS, DisabilityProfile, EnvState,
                    HORIZON, PROXIMITY_RADIUS, RewardWeights, StepResult,
                    TaskId, WIPE_TARGET_COUNT)

__all__ = [
    "TaskId", "DisabilityProfile", "RewardWeights", "EnvState", "StepResult",
    "DEFAULT_REWARD_WEIGHTS", "HORIZON", "WIPE_TARGET_COUNT",
    "PROXIMITY_RADIUS", "reset", "step", "build_observation",
    "compute_reward", "reward_upper_bound", "observation_layout",
    "write_observation_manifest", "observation_dim", "scene",
]


def _state_from_core(core: BatchCore, i: int) -> EnvState:
    contact = ContactInfo(
        in_contact=bool(core.c_active[i]),
        penetration_depth=float(core.c_depth[i]),
        contact_point=core.c_point[i].copy(),
        contact_frame=core.c_frame[i].copy(),
        force=np.array([float(core.c_fn[i]), 0.0, 0.0]),
    )
    state = EnvState(
        task=core.task,
        robot=ChainState(core.robot_q[i].copy(), core.robot_qd[i].copy()),
        human=ChainState(core.human_q[i].copy(), core.human_qd[i].copy()),
        profile=core.prof.profile(i),
        tremor_state=core.tremor[i].copy(),
        t=int(core.t[i]),
        rng_state=int(core.rng.state[i]),
        last_contact=contact,
    )
    if core.task == TaskId.SCRATCH:
        state.scratch_link = int(core.scratch_link[i])
        state.scratch_local = core.scratch_local[i].copy()
    elif core.task == TaskId.BEDBATH:
        state.wipe_links = core.wipe_link[i].copy()
        state.wipe_locals = core.wipe_local[i].copy()
        state.wipe_active = core.wipe_active[i].copy()
    else:
        state.grasp_local = core.grasp_local[i].copy()
        state.waist_target = core.waist[i].copy()
    return state


def _core_from_state(state: EnvState) -> BatchCore:
    core = BatchCore(
        task=state.task,
        n=1,
        robot_q=state.robot.q[None, :].copy(),
        robot_qd=state.robot.qdot[None, :].copy(),
        human_q=state.human.q[None, :].copy(),
        human_qd=state.human.qdot[None, :].copy(),
        tremor=state.tremor_state[None, :].copy(),
        prof=ProfileArrays.broadcast(state.profile, 1),
        t=np.array([state.t], dtype=np.int64),
        rng=RngStream([state.rng_state]),
    )
    if state.task == TaskId.SCRATCH:
        core.scratch_link = np.array([state.scratch_link], dtype=np.int64)
        core.scratch_local = state.scratch_local[None, :].copy()
    elif state.task == TaskId.BEDBATH:
        core.wipe_link = state.wipe_links[None, :].copy()
        core.wipe_local = state.wipe_locals[None, :, :].copy()
        core.wipe_active = state.wipe_active[None, :].copy()
    else:
        core.grasp_local = state.grasp_local[None, :].copy()
        core.waist = state.waist_target[None, :].copy()
    return core


def _obs_pair(obs_row: np.ndarray) -> dict[str, np.ndarray]:
    # both agents observe the full vector (one observation set, no per-agent
    # restriction)
    return {"robot": obs_row.copy(), "human": obs_row.copy()}


def reset(task, disability: DisabilityProfile | None = None, rng=0,
          cfg: SimConfig = DEFAULT_SIM_CONFIG):
    """Fresh instance; `rng` is an integer seed or a one-substream RngStream.

    Returns (EnvState, {"robot": obs, "human": obs}).
    """
    task = TaskId.parse(task)
    disability = disability or DisabilityProfile()
    if not isinstance(rng, RngStream):
        rng = RngStream([int(rng)])
    if rng.n != 1:
        raise ContractViolationError("reset expects a single-substream rng")
    core = kernels.reset_batch(task, rng, ProfileArrays.broadcast(disability, 1), cfg)
    obs = kernels.observe(core, cfg)
    return _state_from_core(core, 0), _obs_pair(obs[0])


def step(state: EnvState, robot_action, human_action,
         cfg: SimConfig = DEFAULT_SIM_CONFIG,
         weights: RewardWeights = DEFAULT_REWARD_WEIGHTS,
         horizon: int = HORIZON) -> StepResult:
    """One control step; actions are clipped here to [-1, 1]."""
    if state.t >= horizon:
        raise ContractViolationError("episode is already at its horizon")
    core = _core_from_state(state)
    obs, reward, done = kernels.step_batch(
        core,
        np.asarray(robot_action, dtype=np.float64)[None, :],
        np.asarray(human_action, dtype=np.float64)[None, :],
        cfg, weights, horizon)
    return StepResult(
        next_state=_state_from_core(core, 0),
        obs=_obs_pair(obs[0]),
        reward=float(reward[0]),
        done=bool(done[0]),
    )


def build_observation(state: EnvState, task=None,
                      cfg: SimConfig = DEFAULT_SIM_CONFIG) -> dict[str, np.ndarray]:
    """Observation vectors for both agents, recomputed from the state."""
    if task is not None and TaskId.parse(task) != state.task:
        raise ContractViolationError("task does not match the state")
    core = _core_from_state(state)
    core.cache = kernels.kinematic_pass(core, cfg)
    # the stored contact record is authoritative for the tactile block
    core.c_active = np.array([state.last_contact.in_contact])
    core.c_fn = np.array([state.last_contact.force[0]])
    obs = kernels.observe(core, cfg)
    return _obs_pair(obs[0])


def compute_reward(state_after: EnvState, task=None,
                   w: RewardWeights = DEFAULT_REWARD_WEIGHTS,
                   cfg: SimConfig = DEFAULT_SIM_CONFIG) -> float:
    """Per-step shared reward evaluated on a state.

    `step` applies this evaluation to the post-dynamics state before wipe
    bookkeeping, so a Bed Bath wipe grants its bonus exactly once.
    """
    if task is not None and TaskId.parse(task) != state_after.task:
        raise ContractViolationError("task does not match the state")
    core = _core_from_state(state_after)
    core.cache = kernels.kinematic_pass(core, cfg)
    core.c_fn = np.array([state_after.last_contact.force[0]])
    sig = kernels.signals(core, cfg)
    sig["contact_force"] = core.c_fn
    return float(kernels.reward_terms(core, sig, w)[0])


def reward_upper_bound(task, horizon: int,
                       w: RewardWeights = DEFAULT_REWARD_WEIGHTS) -> float:
    """Maximum achievable return: per-step component maxima summed over the
    horizon plus the finite one-time wipe bonuses."""
    task = TaskId.parse(task)
    if horizon <= 0:
        raise ContractViolationError("horizon must be positive")
    if task == TaskId.SCRATCH:
        # (v/v*) e^{-v/v*} and (f/f*) e^{-f/f*} each peak at e^{-1}
        per_step = w.scale_reach + w.scale_scratch * np.exp(-2.0)
        return float(horizon * per_step)
    if task == TaskId.BEDBATH:
        return float(horizon * w.scale_reach
                     + min(WIPE_TARGET_COUNT, horizon) * w.scale_wipe)
    per_step = (w.scale_reach + w.scale_waist
                + w.scale_rotation * 2.0 * np.sqrt(3.0))
    return float(horizon * per_step)


_COMMON_LAYOUT = (
    ("robot_q", 7), ("robot_qd", 7), ("ee_pos", 3), ("ee_quat", 4),
    ("ee_force", 3), ("human_q", 3), ("human_q_pad", 6), ("human_qd", 3),
    ("human_qd_pad", 6), ("arm_lower_pos", 3), ("arm_upper_pos", 3),
    ("ee_to_target", 3), ("ee_target_dist", 1),
)
_ARMASSIST_EXTRA = (("ee_target_rot", 9), ("arm_to_waist", 3),
                    ("arm_waist_dist", 1))


def observation_layout(task) -> list[dict]:
    """Named slices of the observation vector, in order."""
    task = TaskId.parse(task)
    fields = _COMMON_LAYOUT + (_ARMASSIST_EXTRA if task == TaskId.ARMASSIST else ())
    layout, offset = [], 0
    for name, length in fields:
        layout.append({"name": name, "offset": offset, "length": length})
        offset += length
    assert offset == observation_dim(task)
    return layout


def write_observation_manifest(path) -> None:
    doc = {task.value: {"dim": observation_dim(task),
                        "fields": observation_layout(task)}
           for task in TaskId}
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")
