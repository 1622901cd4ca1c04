"""Rigid-transform helpers, capsule geometry, and penalty contacts.

All kernel functions accept arrays with an arbitrary leading batch shape and
use only elementwise numpy operations (plus stacked 3x3 matmul), so results
for one instance do not depend on how many instances share the batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractViolationError
from ..rng import RngStream

# Collision groups: 0 collides with nothing; 1 and 2 are mutually exclusive
# families; 3 collides with everything that collides at all.
GROUP_DISABLED = 0
GROUP_ROBOT = 1
GROUP_SCENE = 2
GROUP_SHARED = 3


def groups_collide(ga: int, gb: int) -> bool:
    if ga == GROUP_DISABLED or gb == GROUP_DISABLED:
        return False
    return ga == gb or ga == GROUP_SHARED or gb == GROUP_SHARED


@dataclass(frozen=True)
class CapsuleGeom:
    """Capsule as a thick segment; start == end degenerates to a sphere."""

    segment_start: np.ndarray
    segment_end: np.ndarray
    radius: float
    collision_group: int = GROUP_DISABLED

    def __post_init__(self):
        object.__setattr__(self, "segment_start",
                           np.asarray(self.segment_start, dtype=np.float64))
        object.__setattr__(self, "segment_end",
                           np.asarray(self.segment_end, dtype=np.float64))
        if self.segment_start.shape != (3,) or self.segment_end.shape != (3,):
            raise ContractViolationError("capsule endpoints must be 3-vectors")
        if not self.radius > 0.0:
            raise ContractViolationError("capsule radius must be positive")

    @property
    def axis_length(self) -> float:
        return float(np.linalg.norm(self.segment_end - self.segment_start))

    def surface_area(self) -> float:
        r = self.radius
        return 2.0 * np.pi * r * self.axis_length + 4.0 * np.pi * r * r


@dataclass
class ContactInfo:
    """One contact record; force is expressed in the contact frame.

    The frame's columns are (normal, tangent1, tangent2) with the normal
    pointing from geometry A towards geometry B; `force` is the force A
    exerts on B, so a pure penalty contact has force == (fn, 0, 0).
    """

    in_contact: bool = False
    penetration_depth: float = 0.0
    contact_point: np.ndarray = field(default_factory=lambda: np.zeros(3))
    contact_frame: np.ndarray = field(default_factory=lambda: np.eye(3))
    force: np.ndarray = field(default_factory=lambda: np.zeros(3))


# ---------------------------------------------------------------------------
# rotations


def rot_about_axis(axis, angle):
    """Rotation matrices about a fixed unit axis; angle has any batch shape."""
    a = np.asarray(axis, dtype=np.float64)
    k = np.array([[0.0, -a[2], a[1]],
                  [a[2], 0.0, -a[0]],
                  [-a[1], a[0], 0.0]])
    k2 = k @ k
    ang = np.asarray(angle, dtype=np.float64)
    s = np.sin(ang)[..., None, None]
    c = np.cos(ang)[..., None, None]
    return np.eye(3) + s * k + (1.0 - c) * k2


def rot_apply(rot, vec):
    """Apply (...,3,3) rotations to (...,3) or constant (3,) vectors."""
    return np.matmul(rot, np.asarray(vec, dtype=np.float64)[..., None])[..., 0]


def quat_wxyz_from_rot(rot):
    """Unit quaternions (w,x,y,z) from (...,3,3) rotation matrices.

    Shepperd's branch selection evaluated branch-free; the sign is fixed so
    that w >= 0.
    """
    r = np.asarray(rot, dtype=np.float64)
    r00, r01, r02 = r[..., 0, 0], r[..., 0, 1], r[..., 0, 2]
    r10, r11, r12 = r[..., 1, 0], r[..., 1, 1], r[..., 1, 2]
    r20, r21, r22 = r[..., 2, 0], r[..., 2, 1], r[..., 2, 2]
    tr = r00 + r11 + r22

    s_w = 2.0 * np.sqrt(np.maximum(1.0 + tr, 1e-12))
    cand_w = np.stack([0.25 * s_w, (r21 - r12) / s_w,
                       (r02 - r20) / s_w, (r10 - r01) / s_w], axis=-1)
    s_x = 2.0 * np.sqrt(np.maximum(1.0 + r00 - r11 - r22, 1e-12))
    cand_x = np.stack([(r21 - r12) / s_x, 0.25 * s_x,
                       (r01 + r10) / s_x, (r02 + r20) / s_x], axis=-1)
    s_y = 2.0 * np.sqrt(np.maximum(1.0 - r00 + r11 - r22, 1e-12))
    cand_y = np.stack([(r02 - r20) / s_y, (r01 + r10) / s_y,
                       0.25 * s_y, (r12 + r21) / s_y], axis=-1)
    s_z = 2.0 * np.sqrt(np.maximum(1.0 - r00 - r11 + r22, 1e-12))
    cand_z = np.stack([(r10 - r01) / s_z, (r02 + r20) / s_z,
                       (r12 + r21) / s_z, 0.25 * s_z], axis=-1)

    use_w = (tr > 0.0)[..., None]
    x_big = ((r00 >= r11) & (r00 >= r22))[..., None]
    y_big = (r11 >= r22)[..., None]
    q = np.where(use_w, cand_w,
                 np.where(x_big, cand_x, np.where(y_big, cand_y, cand_z)))
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    sign = np.where(q[..., :1] < 0.0, -1.0, 1.0)
    return q * sign


# ---------------------------------------------------------------------------
# segment-segment closest points

_PARALLEL_EPS = 1e-9
_TINY = 1e-12


def segment_closest_params(p0, p1, q0, q1):
    """Barycentric parameters (s, t) of the closest points of two segments.

    Inputs are (...,3); outputs are (...) in [0,1].  Parallel (and fully
    degenerate) configurations tie-break to both segment midpoints, which is
    deterministic and symmetric under argument exchange.
    """
    p0 = np.asarray(p0, dtype=np.float64)
    q0 = np.asarray(q0, dtype=np.float64)
    u = np.asarray(p1, dtype=np.float64) - p0
    v = np.asarray(q1, dtype=np.float64) - q0
    w = p0 - q0
    a = np.sum(u * u, axis=-1)
    b = np.sum(u * v, axis=-1)
    c = np.sum(v * v, axis=-1)
    d = np.sum(u * w, axis=-1)
    e = np.sum(v * w, axis=-1)
    den = a * c - b * b

    a_pt = a <= _TINY
    c_pt = c <= _TINY
    parallel = (den <= _PARALLEL_EPS * a * c) & ~a_pt & ~c_pt

    s = np.clip((b * e - c * d) / np.where(den <= _TINY, 1.0, den), 0.0, 1.0)
    # point-vs-segment reductions
    s = np.where(a_pt, 0.5, s)
    t_raw = (b * s + e) / np.where(c_pt, 1.0, c)
    t = np.clip(t_raw, 0.0, 1.0)
    t = np.where(c_pt, 0.5, t)
    # if t clamped, re-minimize s for that fixed t
    reproj = (t_raw != t) & ~a_pt & ~c_pt
    s_re = np.clip((b * t - d) / np.where(a_pt, 1.0, a), 0.0, 1.0)
    s = np.where(reproj, s_re, s)

    s = np.where(parallel, 0.5, s)
    t = np.where(parallel, 0.5, t)
    return s, t


def segment_closest_points(p0, p1, q0, q1):
    """Closest points themselves plus their distance; shapes as above."""
    s, t = segment_closest_params(p0, p1, q0, q1)
    p0 = np.asarray(p0, dtype=np.float64)
    q0 = np.asarray(q0, dtype=np.float64)
    cp = p0 + s[..., None] * (np.asarray(p1, dtype=np.float64) - p0)
    cq = q0 + t[..., None] * (np.asarray(q1, dtype=np.float64) - q0)
    dvec = cq - cp
    dist = np.sqrt(np.sum(dvec * dvec, axis=-1))
    return cp, cq, dist


# ---------------------------------------------------------------------------
# penalty contact

def _tangent_basis(n):
    """Two tangents completing (...,3) unit normals to a right-handed frame."""
    ax = np.abs(n[..., 0])
    az = np.abs(n[..., 2])
    # reference axis least aligned with n: x unless |nx| dominates, then z
    use_x = ax <= az
    ref = np.where(use_x[..., None],
                   np.array([1.0, 0.0, 0.0]),
                   np.array([0.0, 0.0, 1.0]))
    t1 = np.cross(ref, n)
    t1 = t1 / np.maximum(np.linalg.norm(t1, axis=-1, keepdims=True), _TINY)
    t2 = np.cross(n, t1)
    return t1, t2


def contact_arrays(pa0, pa1, ra, pb0, pb1, rb, stiffness, damping,
                   rel_velocity=None):
    """Batched capsule-capsule penalty contact.

    `rel_velocity` is the velocity of A's material contact point minus B's;
    the damping term acts on the approach speed along the normal and the
    total normal force is floored at zero.  Returns a dict of arrays.
    """
    cp, cq, dist = segment_closest_points(pa0, pa1, pb0, pb1)
    overlap = (ra + rb) - dist
    in_contact = overlap > 0.0
    depth = np.where(in_contact, overlap, 0.0)

    safe = np.maximum(dist, _TINY)[..., None]
    normal = (cq - cp) / safe
    degenerate = dist <= _TINY
    normal = np.where(degenerate[..., None], np.array([0.0, 0.0, 1.0]), normal)

    if rel_velocity is None:
        approach = np.zeros(dist.shape)
    else:
        approach = np.sum(np.asarray(rel_velocity) * normal, axis=-1)
    fn = np.maximum(stiffness * depth + damping * approach, 0.0)
    fn = np.where(in_contact, fn, 0.0)

    surf_a = cp + normal * ra if np.ndim(ra) == 0 else cp + normal * ra[..., None]
    surf_b = cq - normal * rb if np.ndim(rb) == 0 else cq - normal * rb[..., None]
    point = 0.5 * (surf_a + surf_b)

    t1, t2 = _tangent_basis(normal)
    frame = np.stack([normal, t1, t2], axis=-1)
    return {
        "in_contact": in_contact,
        "depth": depth,
        "point": point,
        "normal": normal,
        "frame": frame,
        "fn": fn,
    }


def capsule_contact(a: CapsuleGeom, b: CapsuleGeom, cfg, rel_velocity=None) -> ContactInfo:
    """Contact between two capsules given in the same (world) frame.

    Incompatible collision groups return a no-contact record unconditionally.
    """
    if not groups_collide(a.collision_group, b.collision_group):
        return ContactInfo()
    rel = np.zeros(3) if rel_velocity is None else np.asarray(rel_velocity, dtype=np.float64)
    out = contact_arrays(a.segment_start[None], a.segment_end[None], a.radius,
                         b.segment_start[None], b.segment_end[None], b.radius,
                         cfg.contact_stiffness, cfg.contact_damping,
                         rel_velocity=rel[None])
    if not bool(out["in_contact"][0]):
        return ContactInfo()
    fn = float(out["fn"][0])
    return ContactInfo(
        in_contact=True,
        penetration_depth=float(out["depth"][0]),
        contact_point=out["point"][0],
        contact_frame=out["frame"][0],
        force=np.array([fn, 0.0, 0.0]),
    )


# ---------------------------------------------------------------------------
# surface sampling

def _axis_frame(geom: CapsuleGeom):
    d = geom.segment_end - geom.segment_start
    length = np.linalg.norm(d)
    if length <= _TINY:
        axis = np.array([0.0, 0.0, 1.0])
    else:
        axis = d / length
    ref = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) <= abs(axis[2]) else np.array([0.0, 0.0, 1.0])
    e1 = np.cross(axis, ref)
    e1 = e1 / np.linalg.norm(e1)
    e2 = np.cross(axis, e1)
    return axis, e1, e2, float(length)


def sample_surface_points(geom: CapsuleGeom, rng: RngStream) -> np.ndarray:
    """(n, 3) points uniform on the capsule surface, one per substream.

    Every substream consumes the same number of counter increments regardless
    of which surface region its point lands on.
    """
    axis, e1, e2, length = _axis_frame(geom)
    r = geom.radius
    area_cyl = 2.0 * np.pi * r * length
    area_caps = 4.0 * np.pi * r * r
    p_cyl = area_cyl / (area_cyl + area_caps)

    u_region = rng.uniform()
    u_ax = rng.uniform()
    u_phi = rng.uniform(0.0, 2.0 * np.pi)
    z = rng.normals(3)

    # cylinder candidate
    radial = np.cos(u_phi)[:, None] * e1 + np.sin(u_phi)[:, None] * e2
    p_cylinder = (geom.segment_start
                  + u_ax[:, None] * (length * axis)
                  + r * radial)
    # cap candidate: uniform sphere direction, attached to the matching end
    nz = z / np.maximum(np.linalg.norm(z, axis=1, keepdims=True), _TINY)
    toward_end = (nz @ axis) >= 0.0
    center = np.where(toward_end[:, None], geom.segment_end, geom.segment_start)
    p_cap = center + r * nz

    pick_cyl = u_region < p_cyl
    return np.where(pick_cyl[:, None], p_cylinder, p_cap)


def sample_surface_point(geom: CapsuleGeom, rng: RngStream) -> np.ndarray:
    """Single surface point for a one-substream stream."""
    if rng.n != 1:
        raise ContractViolationError("sample_surface_point expects a single-substream rng")
    return sample_surface_points(geom, rng)[0]
