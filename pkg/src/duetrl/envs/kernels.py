"""Structure-of-arrays environment core.

One BatchCore holds N independent instances of a single task.  Every kernel
is elementwise across the batch (gathers, ufuncs, stacked small matmuls), so
an instance's trajectory is bit-identical whether it is stepped alone or as a
row of a larger batch.  The single-instance API in `duetrl.envs` wraps these
kernels with N == 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContractViolationError, SimulationFaultError
from ..rng import RngStream
from ..simcore import (SimConfig, fk_batch, gravity_torques, integrate_batch,
                       joint_torques_from_force, point_velocity,
                       quat_wxyz_from_rot, sample_surface_points,
                       segment_closest_points)
from ..simcore.geometry import _tangent_basis
from . import scene
from .types import (DisabilityProfile, HORIZON, PROXIMITY_RADIUS,
                    RewardWeights, TaskId, WIPE_TARGET_COUNT)

_ROBOT = scene.ROBOT_MODEL
_HUMAN = scene.HUMAN_MODEL
_R_TL = _ROBOT.torque_limit_vector()
_H_TL = _HUMAN.torque_limit_vector()
_H_LO = _HUMAN.limits_lo()
_H_HI = _HUMAN.limits_hi()
_ELBOW = 2
_EE_RADIUS = _ROBOT.links[scene.ROBOT_EE_LINK].geom.radius
_UPPER_GEOM = _HUMAN.links[scene.HUMAN_UPPER_LINK].geom
_FOREARM_GEOM = _HUMAN.links[scene.HUMAN_FOREARM_LINK].geom
_P_FOREARM = _FOREARM_GEOM.surface_area() / (
    _FOREARM_GEOM.surface_area() + _UPPER_GEOM.surface_area())

_JITTER = 0.05


@dataclass
class ProfileArrays:
    strength: np.ndarray
    rom: np.ndarray
    tremor_amp: np.ndarray
    tremor_tau: np.ndarray

    @classmethod
    def from_profiles(cls, profiles) -> "ProfileArrays":
        profiles = list(profiles)
        return cls(
            strength=np.array([p.strength_multiplier for p in profiles]),
            rom=np.array([p.elbow_rom_fraction for p in profiles]),
            tremor_amp=np.array([p.tremor_amplitude for p in profiles]),
            tremor_tau=np.array([p.tremor_timescale for p in profiles]),
        )

    @classmethod
    def broadcast(cls, profile: DisabilityProfile, n: int) -> "ProfileArrays":
        return cls.from_profiles([profile] * n)

    def profile(self, i: int) -> DisabilityProfile:
        return DisabilityProfile(
            strength_multiplier=float(self.strength[i]),
            elbow_rom_fraction=float(self.rom[i]),
            tremor_amplitude=float(self.tremor_amp[i]),
            tremor_timescale=float(self.tremor_tau[i]),
        )


class PassCache:
    """Kinematics and contact forces of the current configuration."""

    __slots__ = ("fkr", "fkh", "ext_r", "ext_h")

    def __init__(self, fkr, fkh, ext_r, ext_h):
        self.fkr = fkr
        self.fkh = fkh
        self.ext_r = ext_r
        self.ext_h = ext_h


@dataclass
class BatchCore:
    task: TaskId
    n: int
    robot_q: np.ndarray      # (N, 7)
    robot_qd: np.ndarray
    human_q: np.ndarray      # (N, 3)
    human_qd: np.ndarray
    tremor: np.ndarray       # (N, 3)
    prof: ProfileArrays
    t: np.ndarray            # (N,) int64
    rng: RngStream
    # end-effector <-> arm contact record of the current configuration
    c_active: np.ndarray = None
    c_depth: np.ndarray = None
    c_point: np.ndarray = None
    c_frame: np.ndarray = None
    c_fn: np.ndarray = None
    # task targets
    scratch_link: np.ndarray = None     # (N,) int64
    scratch_local: np.ndarray = None    # (N, 3)
    wipe_link: np.ndarray = None        # (N, 52)
    wipe_local: np.ndarray = None       # (N, 52, 3)
    wipe_active: np.ndarray = None      # (N, 52) bool
    grasp_local: np.ndarray = None      # (N, 3)
    waist: np.ndarray = None            # (N, 3)
    cache: PassCache = None


def human_limits(prof: ProfileArrays):
    """Joint limits with the elbow range shrunk by the ROM fraction."""
    n = prof.rom.shape[0]
    lo = np.broadcast_to(_H_LO, (n, 3)).copy()
    hi = np.broadcast_to(_H_HI, (n, 3)).copy()
    center = 0.5 * (_H_LO[_ELBOW] + _H_HI[_ELBOW])
    half = 0.5 * (_H_HI[_ELBOW] - _H_LO[_ELBOW])
    lo[:, _ELBOW] = center - prof.rom * half
    hi[:, _ELBOW] = center + prof.rom * half
    return lo, hi


# ---------------------------------------------------------------------------
# contacts

def _pair_contact(fk_a, qd_a, link_a, fk_b, qd_b, link_b, cfg, bed=False):
    """Penalty contact between link geometries, or a link and the bed."""
    pa0 = fk_a.geom_a[:, link_a]
    pa1 = fk_a.geom_b[:, link_a]
    if bed:
        pb0 = scene.BED_GEOM.segment_start
        pb1 = scene.BED_GEOM.segment_end
        rb = scene.BED_GEOM.radius
    else:
        pb0 = fk_b.geom_a[:, link_b]
        pb1 = fk_b.geom_b[:, link_b]
        rb = _geom_radius(fk_b, link_b)
    ra = _geom_radius(fk_a, link_a)
    cp, cq, dist = segment_closest_points(pa0, pa1, pb0, pb1)
    overlap = (ra + rb) - dist
    active = overlap > 0.0
    depth = np.where(active, overlap, 0.0)

    safe = np.maximum(dist, 1e-12)[..., None]
    normal = (cq - cp) / safe

    va = point_velocity(fk_a, qd_a, cp, upto=link_a + 1)
    vb = 0.0 if bed else point_velocity(fk_b, qd_b, cq, upto=link_b + 1)
    approach = np.sum((va - vb) * normal, axis=-1)
    fn = np.maximum(cfg.contact_stiffness * depth + cfg.contact_damping * approach, 0.0)
    fn = np.where(active, fn, 0.0)
    point = 0.5 * (cp + normal * ra + cq - normal * rb)
    return {"active": active, "depth": depth, "normal": normal,
            "fn": fn, "point": point}


_GEOM_RADII = {}


def _geom_radius(fk, link):
    # radii are model constants; key on the object identity of the fk arrays'
    # column count to distinguish robot from human
    return _GEOM_RADII[(fk.axis_world.shape[1], link)]


_GEOM_RADII[(7, scene.ROBOT_EE_LINK)] = _EE_RADIUS
_GEOM_RADII[(3, scene.HUMAN_UPPER_LINK)] = _UPPER_GEOM.radius
_GEOM_RADII[(3, scene.HUMAN_FOREARM_LINK)] = _FOREARM_GEOM.radius


def kinematic_pass(core: BatchCore, cfg: SimConfig) -> PassCache:
    """FK for both chains, all contact pairs, external joint torques.

    Also refreshes the core's end-effector/arm contact record.
    """
    fkr = fk_batch(_ROBOT, core.robot_q,
                   base_rot=scene.ROBOT_BASE_ROT, base_pos=scene.ROBOT_BASE_POS)
    fkh = fk_batch(_HUMAN, core.human_q,
                   base_rot=scene.HUMAN_BASE_ROT, base_pos=scene.HUMAN_BASE_POS)
    ext_r = np.zeros((core.n, 7))
    ext_h = np.zeros((core.n, 3))

    # probe vs the two arm segments; net record keeps the deeper contact
    rec = None
    for link_h in (scene.HUMAN_UPPER_LINK, scene.HUMAN_FOREARM_LINK):
        c = _pair_contact(fkr, core.robot_qd, scene.ROBOT_EE_LINK,
                          fkh, core.human_qd, link_h, cfg)
        force_on_arm = c["fn"][:, None] * c["normal"]
        ext_h += joint_torques_from_force(fkh, c["point"], force_on_arm,
                                          upto=link_h + 1)
        ext_r += joint_torques_from_force(fkr, c["point"], -force_on_arm)
        if rec is None:
            rec = c
        else:
            take = (c["depth"] > rec["depth"])[:, None]
            rec = {
                "active": rec["active"] | c["active"],
                "depth": np.maximum(rec["depth"], c["depth"]),
                "normal": np.where(take, c["normal"], rec["normal"]),
                "fn": np.where(take[:, 0], c["fn"], rec["fn"]),
                "point": np.where(take, c["point"], rec["point"]),
            }

    # arm segments vs the bed (reaction on the arm only; the bed is static)
    for link_h in (scene.HUMAN_UPPER_LINK, scene.HUMAN_FOREARM_LINK):
        c = _pair_contact(fkh, core.human_qd, link_h, None, None, None, cfg, bed=True)
        ext_h += joint_torques_from_force(
            fkh, c["point"], -c["fn"][:, None] * c["normal"], upto=link_h + 1)

    core.c_active = rec["active"]
    core.c_depth = np.where(rec["active"], rec["depth"], 0.0)
    core.c_fn = np.where(rec["active"], rec["fn"], 0.0)
    core.c_point = np.where(rec["active"][:, None], rec["point"], 0.0)
    t1, t2 = _tangent_basis(rec["normal"])
    frame = np.stack([rec["normal"], t1, t2], axis=-1)
    eye = np.broadcast_to(np.eye(3), (core.n, 3, 3))
    core.c_frame = np.where(rec["active"][:, None, None], frame, eye)
    return PassCache(fkr, fkh, ext_r, ext_h)


# ---------------------------------------------------------------------------
# task signals, rewards, observations

def _target_world(fkh, link, local):
    """World position of link-local points; link (N,), local (N,3)."""
    idx = np.arange(link.shape[0])
    rot = fkh.rot[idx, link]
    org = fkh.pos[idx, link]
    return org + np.matmul(rot, local[..., None])[..., 0]


def _wipe_world(core: BatchCore, fkh):
    idx = np.arange(core.n)[:, None]
    rot = fkh.rot[idx, core.wipe_link]          # (N, 52, 3, 3)
    org = fkh.pos[idx, core.wipe_link]          # (N, 52, 3)
    return org + np.matmul(rot, core.wipe_local[..., None])[..., 0]


def signals(core: BatchCore, cfg: SimConfig) -> dict:
    """Distances, velocities, and frames feeding rewards and observations."""
    cache = core.cache
    fkr, fkh = cache.fkr, cache.fkh
    ee = fkr.ee_pos
    out = {
        "ee_pos": ee,
        "ee_rot": fkr.ee_rot,
        "ee_speed": np.linalg.norm(
            point_velocity(fkr, core.robot_qd, ee), axis=-1),
        "contact_force": core.c_fn,
    }
    if core.task == TaskId.SCRATCH:
        tw = _target_world(fkh, core.scratch_link, core.scratch_local)
        vec = tw - ee
        out["x_ee_t"] = vec
        out["d_ee_t"] = np.linalg.norm(vec, axis=-1)
    elif core.task == TaskId.BEDBATH:
        world = _wipe_world(core, fkh)
        dists = np.linalg.norm(world - ee[:, None, :], axis=-1)
        out["wipe_world"] = world
        out["wipe_dists"] = dists
        _nearest_active(core, out, core.wipe_active)
    else:
        grasp = _target_world(
            fkh, np.full(core.n, scene.HUMAN_FOREARM_LINK, dtype=np.int64),
            core.grasp_local)
        vec = grasp - ee
        out["x_ee_t"] = vec
        out["d_ee_t"] = np.linalg.norm(vec, axis=-1)
        fore_rot = fkh.rot[:, scene.HUMAN_FOREARM_LINK]
        r_rel = np.matmul(np.swapaxes(fkr.ee_rot, -1, -2), fore_rot)
        out["r_rel"] = r_rel
        tr = r_rel[..., 0, 0] + r_rel[..., 1, 1] + r_rel[..., 2, 2]
        out["rot_norm"] = np.sqrt(np.maximum(6.0 + 2.0 * tr, 0.0))
        wrist = fkh.ee_pos
        wvec = core.waist - wrist
        out["x_h_t"] = wvec
        out["d_h_t"] = np.linalg.norm(wvec, axis=-1)
    return out


def _nearest_active(core: BatchCore, out: dict, active: np.ndarray):
    """Fill x_ee_t / d_ee_t with the nearest active wipe target (zero if none)."""
    dists = out["wipe_dists"]
    masked = np.where(active, dists, np.inf)
    idx = np.argmin(masked, axis=1)
    has = active.any(axis=1)
    rows = np.arange(core.n)
    d = np.where(has, masked[rows, idx], 0.0)
    vec = np.where(has[:, None],
                   out["wipe_world"][rows, idx] - out["ee_pos"], 0.0)
    out["nearest_idx"] = idx
    out["has_active"] = has
    out["d_ee_t"] = d
    out["x_ee_t"] = vec


def reward_terms(core: BatchCore, sig: dict, w: RewardWeights) -> np.ndarray:
    """Per-instance shared reward for the current signals."""
    d = sig["d_ee_t"]
    r = w.scale_reach * np.exp(-(d * d) / w.sigma)
    if core.task == TaskId.SCRATCH:
        v = sig["ee_speed"] / w.target_velocity
        f = sig["contact_force"] / w.target_force
        r = r + (w.scale_scratch * (d < PROXIMITY_RADIUS)
                 * (v * np.exp(-v)) * (f * np.exp(-f)))
    elif core.task == TaskId.BEDBATH:
        fired = sig["has_active"] & (d < PROXIMITY_RADIUS) & (sig["contact_force"] > 0.0)
        r = r + w.scale_wipe * fired
        sig["wipe_fired"] = fired
    else:
        r = r + w.scale_waist * (1.0 - np.tanh(sig["d_h_t"] / w.sigma))
        r = r + w.scale_rotation * sig["rot_norm"]
    return r


_PAD6 = 6


def observation_dim(task: TaskId) -> int:
    return 65 if task == TaskId.ARMASSIST else 52


def observe(core: BatchCore, cfg: SimConfig, sig: dict | None = None) -> np.ndarray:
    """(N, D) observation shared by both agents."""
    if sig is None:
        sig = signals(core, cfg)
    cache = core.cache
    fkh = cache.fkh
    n = core.n
    out = np.zeros((n, observation_dim(core.task)))
    out[:, 0:7] = core.robot_q
    out[:, 7:14] = core.robot_qd
    out[:, 14:17] = sig["ee_pos"]
    out[:, 17:21] = quat_wxyz_from_rot(sig["ee_rot"])
    out[:, 21] = core.c_fn          # force in contact frame: (fn, 0, 0)
    # human joint blocks are 9 wide in the layout; the reduced 3-joint
    # arm fills the head of each block, the tail stays zero
    out[:, 24:27] = core.human_q
    out[:, 33:36] = core.human_qd
    out[:, 42:45] = fkh.geom_center[:, scene.HUMAN_FOREARM_LINK]
    out[:, 45:48] = fkh.geom_center[:, scene.HUMAN_UPPER_LINK]
    out[:, 48:51] = sig["x_ee_t"]
    out[:, 51] = sig["d_ee_t"]
    if core.task == TaskId.ARMASSIST:
        out[:, 52:61] = sig["r_rel"].reshape(n, 9)
        out[:, 61:64] = sig["x_h_t"]
        out[:, 64] = sig["d_h_t"]
    return out


# ---------------------------------------------------------------------------
# reset and step

def reset_batch(task: TaskId, rng: RngStream, prof: ProfileArrays,
                cfg: SimConfig) -> BatchCore:
    """Fresh instances drawn from `rng`; draw counts are task-fixed."""
    n = rng.n
    core = BatchCore(
        task=task, n=n,
        robot_q=np.broadcast_to(scene.ROBOT_START_POSE, (n, 7)).copy(),
        robot_qd=np.zeros((n, 7)),
        human_q=np.zeros((n, 3)),
        human_qd=np.zeros((n, 3)),
        tremor=np.zeros((n, 3)),
        prof=prof,
        t=np.zeros(n, dtype=np.int64),
        rng=rng,
    )
    jitter = rng.uniforms(3, -_JITTER, _JITTER)
    lo, hi = human_limits(prof)
    core.human_q = np.clip(scene.HUMAN_START_POSE[task] + jitter, lo, hi)

    if task == TaskId.SCRATCH:
        link, local = _sample_arm_point(rng)
        core.scratch_link = link
        core.scratch_local = local
    elif task == TaskId.BEDBATH:
        links, locals_ = [], []
        for _ in range(WIPE_TARGET_COUNT):
            link, local = _sample_arm_point(rng)
            links.append(link)
            locals_.append(local)
        core.wipe_link = np.stack(links, axis=1)
        core.wipe_local = np.stack(locals_, axis=1)
        core.wipe_active = np.ones((n, WIPE_TARGET_COUNT), dtype=bool)
    else:
        ax = rng.uniform(*scene.GRASP_AXIAL_RANGE)
        core.grasp_local = np.stack(
            [ax, np.zeros(n), np.full(n, scene.GRASP_SURFACE_OFFSET)], axis=1)
        jx = rng.uniform(-scene.WAIST_TARGET_JITTER, scene.WAIST_TARGET_JITTER)
        jy = rng.uniform(-scene.WAIST_TARGET_JITTER, scene.WAIST_TARGET_JITTER)
        core.waist = scene.WAIST_TARGET_CENTER + np.stack(
            [jx, jy, np.zeros(n)], axis=1)

    core.cache = kinematic_pass(core, cfg)
    return core


def _sample_arm_point(rng: RngStream):
    """Uniform point on the arm surface, area-weighted across both segments.

    Draws the same number of counter values for every substream.
    """
    u = rng.uniform()
    up = sample_surface_points(_UPPER_GEOM, rng)
    fo = sample_surface_points(_FOREARM_GEOM, rng)
    pick_fore = u < _P_FOREARM
    link = np.where(pick_fore, scene.HUMAN_FOREARM_LINK, scene.HUMAN_UPPER_LINK)
    local = np.where(pick_fore[:, None], fo, up)
    return link.astype(np.int64), local


def step_batch(core: BatchCore, robot_action: np.ndarray, human_action: np.ndarray,
               cfg: SimConfig, w: RewardWeights, horizon: int = HORIZON):
    """Advance every instance one control step.

    Returns (obs, reward, done) arrays.  The reward is evaluated on the
    post-dynamics state before wipe bookkeeping; wiped targets deactivate
    afterwards so later steps (and observations) see the reduced active set.
    """
    robot_action = np.asarray(robot_action, dtype=np.float64)
    human_action = np.asarray(human_action, dtype=np.float64)
    if robot_action.shape != (core.n, 7) or human_action.shape != (core.n, 3):
        raise ContractViolationError(
            f"action shapes {robot_action.shape}/{human_action.shape} do not "
            f"match batch ({core.n}, 7)/({core.n}, 3)")
    for name, arr in (("robot", robot_action), ("human", human_action)):
        bad = ~np.isfinite(arr)
        if bad.any():
            j = int(np.argmax(bad.any(axis=0)))
            raise SimulationFaultError(f"non-finite {name} action", joint_index=j)

    a_r = np.clip(robot_action, -1.0, 1.0)
    a_h = np.clip(human_action, -1.0, 1.0)
    tau_r = a_r * _R_TL

    alpha = np.exp(-cfg.dt / core.prof.tremor_tau)[:, None]
    noise = core.rng.normals(3)
    core.tremor = (alpha * core.tremor
                   + core.prof.tremor_amp[:, None] * np.sqrt(1.0 - alpha * alpha) * noise)
    tau_h = a_h * _H_TL * core.prof.strength[:, None] + core.tremor
    tau_h = np.clip(tau_h, -_H_TL, _H_TL)

    if core.cache is None:
        core.cache = kinematic_pass(core, cfg)
    pre = core.cache
    taug_r = gravity_torques(_ROBOT, pre.fkr, cfg.gravity)
    taug_h = gravity_torques(_HUMAN, pre.fkh, cfg.gravity)
    lo_h, hi_h = human_limits(core.prof)
    core.robot_q, core.robot_qd = integrate_batch(
        _ROBOT, core.robot_q, core.robot_qd, tau_r, pre.ext_r, cfg, taug_r)
    core.human_q, core.human_qd = integrate_batch(
        _HUMAN, core.human_q, core.human_qd, tau_h, pre.ext_h, cfg, taug_h,
        limits_lo=lo_h, limits_hi=hi_h)

    core.cache = kinematic_pass(core, cfg)
    sig = signals(core, cfg)
    reward = reward_terms(core, sig, w)

    if core.task == TaskId.BEDBATH:
        fired = sig["wipe_fired"]
        if fired.any():
            rows = np.arange(core.n)
            hit = core.wipe_active.copy()
            hit[rows[fired], sig["nearest_idx"][fired]] = False
            core.wipe_active = hit
            _nearest_active(core, sig, core.wipe_active)

    core.t = core.t + 1
    done = core.t >= horizon
    obs = observe(core, cfg, sig)
    return obs, reward, done


# ---------------------------------------------------------------------------
# merge (vectorized auto-reset)

_ROW_FIELDS = ("robot_q", "robot_qd", "human_q", "human_qd", "tremor", "t",
               "c_active", "c_depth", "c_point", "c_frame", "c_fn",
               "scratch_link", "scratch_local", "wipe_link", "wipe_local",
               "wipe_active", "grasp_local", "waist")


def merge_reset(core: BatchCore, fresh: BatchCore, mask: np.ndarray,
                cfg: SimConfig) -> None:
    """Copy `fresh` rows into `core` where mask is set; others keep state.

    The caller is responsible for restoring the rng states of unmasked rows.
    """
    for name in _ROW_FIELDS:
        dst = getattr(core, name)
        src = getattr(fresh, name)
        if dst is None:
            continue
        dst[mask] = src[mask]
    core.cache = kinematic_pass(core, cfg)
