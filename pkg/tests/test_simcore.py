import numpy as np
import pytest

from duetrl.errors import ContractViolationError, SimulationFaultError
from duetrl.rng import RngStream
from duetrl.simcore import (CapsuleGeom, ChainModel, ChainState, LinkSpec,
                            SimConfig, capsule_contact, fk_batch,
                            forward_kinematics, groups_collide,
                            load_chain_model, quat_wxyz_from_rot,
                            rot_about_axis, sample_surface_point,
                            sample_surface_points, segment_closest_points,
                            step_dynamics)
from duetrl.simcore import GROUP_ROBOT, GROUP_SCENE, GROUP_SHARED, GROUP_DISABLED


def unit_link(axis, offset, length, limits=(-3.0, 3.0), damping=0.0):
    return LinkSpec(axis=np.asarray(axis, dtype=float), offset_rot=np.eye(3),
                    offset_pos=np.asarray(offset, dtype=float),
                    geom=CapsuleGeom(np.zeros(3), np.array([length, 0, 0]),
                                     0.05),
                    damping=damping, torque_limit=10.0, joint_limits=limits)


def single_link_model(axis=(0, 0, 1), length=1.0, damping=0.0,
                      limits=(-3.0, 3.0), gravity_scale=0.0):
    return ChainModel(name="test1",
                      links=(unit_link(axis, (0, 0, 0), length, limits, damping),),
                      tool_pos=np.array([length, 0.0, 0.0]),
                      gravity_scale=gravity_scale)


def random_chain(rng, n_links=7):
    links = []
    for _ in range(n_links):
        axis = rng.standard_normal(3)
        axis /= np.linalg.norm(axis)
        links.append(unit_link(axis, rng.uniform(-0.3, 0.3, 3),
                               rng.uniform(0.1, 0.4)))
    return ChainModel(name="rand", links=tuple(links),
                      tool_pos=rng.uniform(-0.2, 0.2, 3),
                      base_pos=rng.uniform(-0.5, 0.5, 3))


# ---------------------------------------------------------------------------
# forward kinematics

def test_fk_single_link_identity():
    model = single_link_model()
    _, (rot, pos) = forward_kinematics(model, np.zeros(1))
    assert np.allclose(pos, [1.0, 0.0, 0.0], atol=1e-15)


def test_fk_single_link_quarter_turn():
    model = single_link_model(axis=(0, 0, 1))
    _, (rot, pos) = forward_kinematics(model, np.array([np.pi / 2]))
    assert np.allclose(pos, [0.0, 1.0, 0.0], atol=1e-12)


def _homogeneous_oracle(model, q):
    # independent 4x4 matrix-product evaluation
    def hom(rot, pos):
        m = np.eye(4)
        m[:3, :3] = rot
        m[:3, 3] = pos
        return m

    def axis_rot(axis, angle):
        c, s = np.cos(angle), np.sin(angle)
        x, y, z = axis
        return np.array([
            [c + x * x * (1 - c), x * y * (1 - c) - z * s, x * z * (1 - c) + y * s],
            [y * x * (1 - c) + z * s, c + y * y * (1 - c), y * z * (1 - c) - x * s],
            [z * x * (1 - c) - y * s, z * y * (1 - c) + x * s, c + z * z * (1 - c)],
        ])

    m = hom(model.base_rot, model.base_pos)
    for link, angle in zip(model.links, q):
        m = m @ hom(link.offset_rot, link.offset_pos)
        m = m @ hom(axis_rot(link.axis, angle), np.zeros(3))
    m = m @ hom(model.tool_rot, model.tool_pos)
    return m[:3, 3]


def test_fk_matches_homogeneous_matrix_oracle():
    rng = np.random.default_rng(3)
    for _ in range(20):
        model = random_chain(rng)
        q = rng.uniform(-np.pi, np.pi, 7)
        _, (_, pos) = forward_kinematics(model, q)
        assert np.allclose(pos, _homogeneous_oracle(model, q), atol=1e-10)


def test_fk_dimension_mismatch():
    model = single_link_model()
    with pytest.raises(ContractViolationError):
        forward_kinematics(model, np.zeros(2))


def test_quaternions_are_unit_and_match_rotation():
    rng = np.random.default_rng(1)
    angles = rng.uniform(-np.pi, np.pi, (50,))
    axes = rng.standard_normal((50, 3))
    for angle, axis in zip(angles, axes):
        axis = axis / np.linalg.norm(axis)
        rot = rot_about_axis(axis, angle)
        w, x, y, z = quat_wxyz_from_rot(rot)
        assert abs(w * w + x * x + y * y + z * z - 1.0) < 1e-12
        # rebuild the rotation from the quaternion
        rebuilt = np.array([
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ])
        assert np.allclose(rebuilt, rot, atol=1e-9)


# ---------------------------------------------------------------------------
# dynamics

def test_step_equilibrium():
    model = single_link_model(damping=0.5)
    cfg = SimConfig(gravity=(0.0, 0.0, 0.0))
    state = ChainState(np.zeros(1), np.zeros(1))
    out = step_dynamics(model, state, np.zeros(1), np.zeros(1), cfg)
    assert np.array_equal(out.q, state.q)
    assert np.array_equal(out.qdot, state.qdot)


def test_step_constant_torque_velocity():
    # frictionless unit-inertia joint: qdot after n steps is n*dt*tau
    model = single_link_model(damping=0.0)
    cfg = SimConfig(dt=0.01, substeps=4, gravity=(0.0, 0.0, 0.0))
    state = ChainState(np.zeros(1), np.zeros(1))
    tau = 0.7
    n = 25
    for _ in range(n):
        state = step_dynamics(model, state, np.array([tau]), np.zeros(1), cfg)
    assert abs(state.qdot[0] - n * cfg.dt * tau) < 1e-9


def test_step_limit_clamp():
    # drive the joint into its stop: q lands exactly on the limit with zero
    # velocity on the step the limit binds, and stays there
    model = single_link_model(limits=(-0.5, 0.5))
    cfg = SimConfig(gravity=(0.0, 0.0, 0.0))
    state = ChainState(np.array([0.0]), np.array([0.0]))
    bound = False
    for _ in range(200):
        state = step_dynamics(model, state, np.array([5.0]), np.zeros(1), cfg)
        assert state.q[0] <= 0.5
        if state.q[0] == 0.5:
            bound = True
            assert state.qdot[0] == 0.0
            break
    assert bound


def test_step_nan_raises_with_joint_index():
    model = random_chain(np.random.default_rng(0))
    state = ChainState(np.zeros(7), np.zeros(7))
    torques = np.zeros(7)
    torques[3] = np.nan
    with pytest.raises(SimulationFaultError) as err:
        step_dynamics(model, state, torques, np.zeros(7))
    assert err.value.joint_index == 3


def test_joint_limits_hold_under_fuzz():
    rng = np.random.default_rng(5)
    model = load_chain_model("robot7")
    lo, hi = model.limits_lo(), model.limits_hi()
    cfg = SimConfig()
    state = ChainState(np.zeros(7), np.zeros(7))
    for _ in range(300):
        tau = rng.uniform(-1, 1, 7) * model.torque_limit_vector()
        state = step_dynamics(model, state, tau, np.zeros(7), cfg)
        assert np.all(state.q >= lo - 1e-12)
        assert np.all(state.q <= hi + 1e-12)


def test_determinism_bitwise():
    rng = np.random.default_rng(9)
    model = random_chain(rng)
    cfg = SimConfig()
    tau = rng.uniform(-1, 1, (50, 7))
    outs = []
    for _ in range(2):
        state = ChainState(np.zeros(7), np.zeros(7))
        for t in range(50):
            state = step_dynamics(model, state, tau[t], np.zeros(7), cfg)
        outs.append((state.q.tobytes(), state.qdot.tobytes()))
    assert outs[0] == outs[1]


def test_kinetic_energy_nonincreasing_without_drive():
    rng = np.random.default_rng(11)
    for damping in (0.0, 0.5, 2.0):
        model = ChainModel(
            name="damped",
            links=tuple(unit_link(a / np.linalg.norm(a), rng.uniform(-0.2, 0.2, 3),
                                  0.2, damping=damping)
                        for a in rng.standard_normal((4, 3))),
            gravity_scale=0.0)
        cfg = SimConfig(gravity=(0.0, 0.0, 0.0))
        state = ChainState(np.zeros(4), rng.uniform(-2, 2, 4))
        energy = 0.5 * np.sum(state.qdot ** 2)
        for _ in range(100):
            state = step_dynamics(model, state, np.zeros(4), np.zeros(4), cfg)
            new_energy = 0.5 * np.sum(state.qdot ** 2)
            assert new_energy <= energy + 1e-12
            energy = new_energy


# ---------------------------------------------------------------------------
# capsule contact

CFG = SimConfig()


def sphere(center, radius, group=GROUP_SHARED):
    c = np.asarray(center, dtype=float)
    return CapsuleGeom(c, c.copy(), radius, group)


def test_spheres_separated_no_contact():
    a = sphere([0, 0, 0], 0.1)
    b = sphere([0.3, 0, 0], 0.1)
    info = capsule_contact(a, b, CFG)
    assert not info.in_contact
    assert info.penetration_depth == 0.0
    assert np.all(info.force == 0.0)


def test_spheres_overlapping_penetration_and_normal():
    a = sphere([0, 0, 0], 0.1)
    b = sphere([0.15, 0, 0], 0.1)
    info = capsule_contact(a, b, CFG)
    assert info.in_contact
    assert abs(info.penetration_depth - 0.05) < 1e-12
    assert np.allclose(info.contact_frame[:, 0], [1, 0, 0], atol=1e-12)
    assert info.force[0] > 0.0


def test_collision_group_masking():
    a = sphere([0, 0, 0], 0.2, GROUP_ROBOT)
    b = sphere([0.1, 0, 0], 0.2, GROUP_SCENE)
    assert not capsule_contact(a, b, CFG).in_contact
    assert not groups_collide(GROUP_ROBOT, GROUP_SCENE)
    assert not groups_collide(GROUP_DISABLED, GROUP_SHARED)
    for ga, gb in ((GROUP_ROBOT, GROUP_ROBOT), (GROUP_ROBOT, GROUP_SHARED),
                   (GROUP_SCENE, GROUP_SHARED), (GROUP_SHARED, GROUP_SHARED)):
        assert groups_collide(ga, gb)


def _grid_min_distance(p0, p1, q0, q1, steps=1001):
    s = np.linspace(0.0, 1.0, steps)
    pa = p0[None, :] + s[:, None] * (p1 - p0)[None, :]
    qb = q0[None, :] + s[:, None] * (q1 - q0)[None, :]
    d = np.linalg.norm(pa[:, None, :] - qb[None, :, :], axis=-1)
    return d.min()


def test_segment_distance_matches_grid_search():
    rng = np.random.default_rng(17)
    for _ in range(60):
        p0, p1, q0, q1 = rng.uniform(-1, 1, (4, 3))
        _, _, dist = segment_closest_points(p0[None], p1[None], q0[None], q1[None])
        oracle = _grid_min_distance(p0, p1, q0, q1)
        assert abs(dist[0] - oracle) < 1e-3


def test_contact_symmetry():
    rng = np.random.default_rng(23)
    for _ in range(100):
        a = CapsuleGeom(rng.uniform(-0.3, 0.3, 3), rng.uniform(-0.3, 0.3, 3),
                        rng.uniform(0.05, 0.3), GROUP_SHARED)
        b = CapsuleGeom(rng.uniform(-0.3, 0.3, 3), rng.uniform(-0.3, 0.3, 3),
                        rng.uniform(0.05, 0.3), GROUP_SHARED)
        ab = capsule_contact(a, b, CFG)
        ba = capsule_contact(b, a, CFG)
        assert ab.in_contact == ba.in_contact
        assert abs(ab.penetration_depth - ba.penetration_depth) < 1e-9
        if ab.in_contact:
            assert np.allclose(ab.contact_frame[:, 0], -ba.contact_frame[:, 0],
                               atol=1e-9)


def test_contact_frame_orthonormal():
    rng = np.random.default_rng(29)
    for _ in range(50):
        a = CapsuleGeom(rng.uniform(-0.2, 0.2, 3), rng.uniform(-0.2, 0.2, 3),
                        0.25, GROUP_SHARED)
        b = CapsuleGeom(rng.uniform(-0.2, 0.2, 3), rng.uniform(-0.2, 0.2, 3),
                        0.25, GROUP_SHARED)
        info = capsule_contact(a, b, CFG)
        if info.in_contact:
            f = info.contact_frame
            assert np.allclose(f.T @ f, np.eye(3), atol=1e-6)


def test_parallel_segments_midpoint_tiebreak():
    p0, p1 = np.array([0.0, 0, 0]), np.array([1.0, 0, 0])
    q0, q1 = np.array([0.0, 0.1, 0]), np.array([1.0, 0.1, 0])
    cp, cq, dist = segment_closest_points(p0[None], p1[None], q0[None], q1[None])
    assert np.allclose(cp[0], [0.5, 0.0, 0.0], atol=1e-12)
    assert np.allclose(cq[0], [0.5, 0.1, 0.0], atol=1e-12)
    assert abs(dist[0] - 0.1) < 1e-12


# ---------------------------------------------------------------------------
# surface sampling

def test_sample_sphere_surface_distance():
    geom = sphere([0.2, -0.1, 0.4], 0.17)
    for seed in (0, 1, 2):
        p = sample_surface_point(geom, RngStream([seed]))
        assert abs(np.linalg.norm(p - geom.segment_start) - 0.17) < 1e-9


def test_sample_deterministic():
    geom = CapsuleGeom(np.zeros(3), np.array([0.5, 0, 0]), 0.05, GROUP_SHARED)
    a = sample_surface_point(geom, RngStream([99]))
    b = sample_surface_point(geom, RngStream([99]))
    assert np.array_equal(a, b)


def test_sample_radius_and_axial_uniformity():
    # long thin capsule: cylinder dominates; axial bins should be uniform
    length, radius = 2.0, 0.05
    geom = CapsuleGeom(np.zeros(3), np.array([length, 0, 0]), radius,
                       GROUP_SHARED)
    n = 100_000
    pts = sample_surface_points(geom, RngStream(list(range(n))))
    # every point is at distance `radius` from the axis segment
    t = np.clip(pts[:, 0] / length, 0.0, 1.0)
    closest = np.stack([t * length, np.zeros(n), np.zeros(n)], axis=1)
    d = np.linalg.norm(pts - closest, axis=1)
    assert np.max(np.abs(d - radius)) < 1e-9
    # axial uniformity over the cylindrical section, 3-sigma multinomial
    cyl = pts[(pts[:, 0] > 0.0) & (pts[:, 0] < length)]
    frac_cyl = 2 * np.pi * radius * length / geom.surface_area()
    bins = 20
    counts, _ = np.histogram(cyl[:, 0], bins=bins, range=(0.0, length))
    expected = n * frac_cyl / bins
    sigma = np.sqrt(n * frac_cyl * (1 / bins) * (1 - 1 / bins))
    assert np.all(np.abs(counts - expected) < 3.0 * sigma + 1e-9)


# ---------------------------------------------------------------------------
# model serialization

def test_builtin_models_load():
    robot = load_chain_model("robot7")
    human = load_chain_model("human-arm3")
    assert robot.n_joints == 7
    assert human.n_joints == 3
    assert robot.gravity_scale == 0.0
    assert human.gravity_scale == 1.0


def test_chain_json_roundtrip(tmp_path):
    from duetrl.simcore import chain_from_dict, chain_to_dict
    model = load_chain_model("robot7")
    clone = chain_from_dict(chain_to_dict(model))
    assert clone.n_joints == model.n_joints
    for a, b in zip(model.links, clone.links):
        assert np.array_equal(a.axis, b.axis)
        assert a.joint_limits == b.joint_limits
    path = tmp_path / "model.json"
    import json
    path.write_text(json.dumps(chain_to_dict(model)))
    assert load_chain_model(path).name == "robot7"


def test_model_validation():
    with pytest.raises(ContractViolationError):
        unit_link((0, 0, 2.0), (0, 0, 0), 1.0)   # non-unit axis
    with pytest.raises(ContractViolationError):
        unit_link((0, 0, 1), (0, 0, 0), 1.0, limits=(1.0, -1.0))
    with pytest.raises(ContractViolationError):
        CapsuleGeom(np.zeros(3), np.ones(3), -0.1)
