"""Serial revolute chains: kinematics and torque-driven stepping.

The dynamics model is deliberately light: each joint is a unit-inertia double
integrator with viscous damping, a gravity torque obtained by projecting
per-link gravity onto the joint axes, and hard joint limits that zero the
joint velocity when they bind.  Integration is semi-implicit Euler split into
substeps.  Batched variants take q/qdot of shape (N, n) and are elementwise
across the batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractViolationError, SimulationFaultError
from .geometry import CapsuleGeom, rot_about_axis, rot_apply

_AXIS_TOL = 1e-9


@dataclass(frozen=True)
class LinkSpec:
    axis: np.ndarray                 # unit joint axis in the joint frame
    offset_rot: np.ndarray           # fixed parent->joint rotation (3,3)
    offset_pos: np.ndarray           # fixed parent-frame translation (3,)
    geom: CapsuleGeom                # collision/visual geometry, link frame
    damping: float                   # N*m*s/rad
    torque_limit: float              # N*m
    joint_limits: tuple[float, float]

    def __post_init__(self):
        object.__setattr__(self, "axis", np.asarray(self.axis, dtype=np.float64))
        object.__setattr__(self, "offset_rot", np.asarray(self.offset_rot, dtype=np.float64))
        object.__setattr__(self, "offset_pos", np.asarray(self.offset_pos, dtype=np.float64))
        if abs(np.linalg.norm(self.axis) - 1.0) > _AXIS_TOL:
            raise ContractViolationError("joint axis must be unit length")
        lo, hi = self.joint_limits
        if not lo < hi:
            raise ContractViolationError("joint limits must satisfy lo < hi")
        if not self.torque_limit > 0.0:
            raise ContractViolationError("torque limit must be positive")


@dataclass(frozen=True)
class ChainModel:
    name: str
    links: tuple[LinkSpec, ...]
    tool_rot: np.ndarray = field(default_factory=lambda: np.eye(3))
    tool_pos: np.ndarray = field(default_factory=lambda: np.zeros(3))
    base_rot: np.ndarray = field(default_factory=lambda: np.eye(3))
    base_pos: np.ndarray = field(default_factory=lambda: np.zeros(3))
    gravity_scale: float = 1.0       # 0 models gravity-compensated actuation

    def __post_init__(self):
        object.__setattr__(self, "tool_rot", np.asarray(self.tool_rot, dtype=np.float64))
        object.__setattr__(self, "tool_pos", np.asarray(self.tool_pos, dtype=np.float64))
        object.__setattr__(self, "base_rot", np.asarray(self.base_rot, dtype=np.float64))
        object.__setattr__(self, "base_pos", np.asarray(self.base_pos, dtype=np.float64))

    @property
    def n_joints(self) -> int:
        return len(self.links)

    def damping_vector(self) -> np.ndarray:
        return np.array([l.damping for l in self.links])

    def torque_limit_vector(self) -> np.ndarray:
        return np.array([l.torque_limit for l in self.links])

    def limits_lo(self) -> np.ndarray:
        return np.array([l.joint_limits[0] for l in self.links])

    def limits_hi(self) -> np.ndarray:
        return np.array([l.joint_limits[1] for l in self.links])


@dataclass
class ChainState:
    q: np.ndarray
    qdot: np.ndarray

    def copy(self) -> "ChainState":
        return ChainState(self.q.copy(), self.qdot.copy())


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.01
    substeps: int = 4
    contact_stiffness: float = 2000.0   # N/m
    contact_damping: float = 20.0       # N*s/m
    gravity: tuple[float, float, float] = (0.0, 0.0, -9.81)

    def __post_init__(self):
        if not self.dt > 0.0:
            raise ContractViolationError("dt must be positive")
        if self.substeps < 1:
            raise ContractViolationError("substeps must be >= 1")


DEFAULT_SIM_CONFIG = SimConfig()


class FkResult:
    """World-frame kinematics of every link plus the tool frame.

    Arrays: rot (N,n,3,3), pos (N,n,3) joint origins, axis_world (N,n,3),
    geom_a/geom_b (N,n,3) capsule endpoints, geom_center (N,n,3),
    ee_rot (N,3,3), ee_pos (N,3).
    """

    __slots__ = ("rot", "pos", "axis_world", "geom_a", "geom_b",
                 "geom_center", "ee_rot", "ee_pos")

    def __init__(self, rot, pos, axis_world, geom_a, geom_b, geom_center,
                 ee_rot, ee_pos):
        self.rot = rot
        self.pos = pos
        self.axis_world = axis_world
        self.geom_a = geom_a
        self.geom_b = geom_b
        self.geom_center = geom_center
        self.ee_rot = ee_rot
        self.ee_pos = ee_pos


def fk_batch(model: ChainModel, q: np.ndarray,
             base_rot: np.ndarray | None = None,
             base_pos: np.ndarray | None = None) -> FkResult:
    """Forward kinematics for q of shape (N, n_joints)."""
    q = np.asarray(q, dtype=np.float64)
    if q.ndim != 2 or q.shape[1] != model.n_joints:
        raise ContractViolationError(
            f"q must be (N, {model.n_joints}), got {q.shape}")
    n_batch = q.shape[0]
    rot_parent = np.broadcast_to(
        model.base_rot if base_rot is None else np.asarray(base_rot),
        (n_batch, 3, 3)).copy()
    pos_parent = np.broadcast_to(
        model.base_pos if base_pos is None else np.asarray(base_pos),
        (n_batch, 3)).copy()

    rots, poss, axes, geom_as, geom_bs, centers = [], [], [], [], [], []
    for i, link in enumerate(model.links):
        joint_rot = rot_parent @ link.offset_rot
        joint_pos = pos_parent + rot_apply(rot_parent, link.offset_pos)
        link_rot = joint_rot @ rot_about_axis(link.axis, q[:, i])
        axes.append(rot_apply(link_rot, link.axis))
        ga = joint_pos + rot_apply(link_rot, link.geom.segment_start)
        gb = joint_pos + rot_apply(link_rot, link.geom.segment_end)
        rots.append(link_rot)
        poss.append(joint_pos)
        geom_as.append(ga)
        geom_bs.append(gb)
        centers.append(0.5 * (ga + gb))
        rot_parent, pos_parent = link_rot, joint_pos

    ee_rot = rot_parent @ model.tool_rot
    ee_pos = pos_parent + rot_apply(rot_parent, model.tool_pos)
    return FkResult(
        rot=np.stack(rots, axis=1),
        pos=np.stack(poss, axis=1),
        axis_world=np.stack(axes, axis=1),
        geom_a=np.stack(geom_as, axis=1),
        geom_b=np.stack(geom_bs, axis=1),
        geom_center=np.stack(centers, axis=1),
        ee_rot=ee_rot,
        ee_pos=ee_pos,
    )


def forward_kinematics(model: ChainModel, q) -> tuple[list[tuple[np.ndarray, np.ndarray]], tuple[np.ndarray, np.ndarray]]:
    """Per-link world frames plus the end-effector frame for a single chain.

    Returns ([(rot, pos) per link], (ee_rot, ee_pos)).
    """
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (model.n_joints,):
        raise ContractViolationError(
            f"expected {model.n_joints} joint angles, got shape {q.shape}")
    res = fk_batch(model, q[None, :])
    frames = [(res.rot[0, i], res.pos[0, i]) for i in range(model.n_joints)]
    return frames, (res.ee_rot[0], res.ee_pos[0])


def point_velocity(fk: FkResult, qdot: np.ndarray, point: np.ndarray,
                   upto: int | None = None) -> np.ndarray:
    """Velocity of a world point rigidly attached to the chain tip.

    Sum over joints of qdot_i * (axis_i x (p - o_i)); `upto` restricts to the
    first k joints (None means all).
    """
    n = fk.axis_world.shape[1] if upto is None else upto
    vel = np.zeros(point.shape)
    for i in range(n):
        arm = point - fk.pos[:, i]
        vel = vel + qdot[:, i:i + 1] * np.cross(fk.axis_world[:, i], arm)
    return vel


def joint_torques_from_force(fk: FkResult, point: np.ndarray,
                             force: np.ndarray,
                             upto: int | None = None) -> np.ndarray:
    """Jacobian-transpose mapping of a world force at `point` to joint torques.

    `upto` limits the force to act on the first k joints, for forces applied
    to a link in the middle of the chain.
    """
    n = fk.axis_world.shape[1]
    k = n if upto is None else upto
    zeros = np.zeros(point.shape[:-1])
    cols = []
    for i in range(n):
        if i >= k:
            cols.append(zeros)
            continue
        arm = point - fk.pos[:, i]
        cols.append(np.sum(np.cross(fk.axis_world[:, i], arm) * force, axis=-1))
    return np.stack(cols, axis=1)


def gravity_torques(model: ChainModel, fk: FkResult, gravity) -> np.ndarray:
    """Per-joint gravity torque with unit mass at each link's geometry center."""
    if model.gravity_scale == 0.0:
        return np.zeros(fk.pos.shape[:2])
    g = np.asarray(gravity, dtype=np.float64) * model.gravity_scale
    n = model.n_joints
    # suffix sums of link centers: S_i = sum_{j>=i} c_j
    suffix = np.cumsum(fk.geom_center[:, ::-1], axis=1)[:, ::-1]
    cols = []
    for i in range(n):
        mass_after = float(n - i)
        lever = suffix[:, i] - mass_after * fk.pos[:, i]
        cols.append(np.sum(np.cross(fk.axis_world[:, i], lever) * g, axis=-1))
    return np.stack(cols, axis=1)


def integrate_batch(model: ChainModel, q, qdot, torques, external, cfg: SimConfig,
                    gravity_torque, limits_lo=None, limits_hi=None):
    """Semi-implicit Euler substepping with joint-limit clamping.

    `gravity_torque` is evaluated once at the entry configuration and held
    constant over the substeps.  Limits may be per-instance arrays to support
    range-of-motion restriction.
    """
    lo = model.limits_lo() if limits_lo is None else limits_lo
    hi = model.limits_hi() if limits_hi is None else limits_hi
    damping = model.damping_vector()
    h = cfg.dt / cfg.substeps
    drive = torques + external + gravity_torque
    for _ in range(cfg.substeps):
        qdot = qdot + h * (drive - damping * qdot)
        q = q + h * qdot
        hit = (q > hi) | (q < lo)
        q = np.clip(q, lo, hi)
        qdot = np.where(hit, 0.0, qdot)
    return q, qdot


def step_dynamics(model: ChainModel, state: ChainState, torques, external_joint_forces,
                  cfg: SimConfig = DEFAULT_SIM_CONFIG) -> ChainState:
    """Advance a single chain by one control step of cfg.dt seconds."""
    n = model.n_joints
    torques = np.asarray(torques, dtype=np.float64)
    external = np.asarray(external_joint_forces, dtype=np.float64)
    if state.q.shape != (n,) or torques.shape != (n,) or external.shape != (n,):
        raise ContractViolationError("joint-space dimension mismatch")
    for name, arr in (("q", state.q), ("qdot", state.qdot),
                      ("torques", torques), ("external", external)):
        bad = ~np.isfinite(arr)
        if bad.any():
            idx = int(np.argmax(bad))
            raise SimulationFaultError(f"non-finite {name} at joint {idx}", joint_index=idx)
    fk = fk_batch(model, state.q[None, :])
    tau_g = gravity_torques(model, fk, cfg.gravity)
    q, qdot = integrate_batch(model, state.q[None, :], state.qdot[None, :],
                              torques[None, :], external[None, :], cfg, tau_g)
    return ChainState(q[0], qdot[0])
