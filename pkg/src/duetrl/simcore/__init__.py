"""Minimal articulated-body simulation core."""

from .chain import (ChainModel, ChainState, DEFAULT_SIM_CONFIG, FkResult,
                    LinkSpec, SimConfig, fk_batch, forward_kinematics,
                    gravity_torques, integrate_batch, joint_torques_from_force,
                    point_velocity, step_dynamics)
from .geometry import (CapsuleGeom, ContactInfo, GROUP_DISABLED, GROUP_ROBOT,
                       GROUP_SCENE, GROUP_SHARED, capsule_contact,
                       contact_arrays, groups_collide, quat_wxyz_from_rot,
                       rot_about_axis, rot_apply, sample_surface_point,
                       sample_surface_points, segment_closest_params,
                       segment_closest_points)
from .models import (builtin_chain_json, chain_from_dict, chain_to_dict,
                     load_chain_model)

__all__ = [
    "CapsuleGeom", "ChainModel", "ChainState", "ContactInfo",
    "DEFAULT_SIM_CONFIG", "FkResult", "GROUP_DISABLED", "GROUP_ROBOT",
    "GROUP_SCENE", "GROUP_SHARED", "LinkSpec", "SimConfig",
    "builtin_chain_json", "capsule_contact", "chain_from_dict",
    "chain_to_dict", "contact_arrays", "fk_batch", "forward_kinematics",
    "gravity_torques", "groups_collide", "integrate_batch",
    "joint_torques_from_force", "load_chain_model", "point_velocity",
    "quat_wxyz_from_rot", "rot_about_axis", "rot_apply",
    "sample_surface_point", "sample_surface_points",
    "segment_closest_params", "segment_closest_points", "step_dynamics",
]
