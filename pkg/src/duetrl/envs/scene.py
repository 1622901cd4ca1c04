"""Shared world layout: chain placements, static geometry, start poses."""

from __future__ import annotations

import numpy as np

from ..simcore import CapsuleGeom, GROUP_SCENE, load_chain_model
from .types import TaskId

ROBOT_MODEL = load_chain_model("robot7")
HUMAN_MODEL = load_chain_model("human-arm3")

# Human shoulder sits just above the bed surface; the robot pedestal stands
# beside the bed on the arm side.
HUMAN_BASE_POS = np.array([0.0, 0.0, 0.605])
HUMAN_BASE_ROT = np.eye(3)
ROBOT_BASE_POS = np.array([0.85, 0.35, 0.15])
ROBOT_BASE_ROT = np.eye(3)

BED_GEOM = CapsuleGeom(
    segment_start=np.array([0.0, -0.75, 0.28]),
    segment_end=np.array([0.0, 0.95, 0.28]),
    radius=0.28,
    collision_group=GROUP_SCENE,
)

# Link indices of the collision-relevant geometry.
ROBOT_EE_LINK = 6
HUMAN_UPPER_LINK = 1
HUMAN_FOREARM_LINK = 2

# Start poses; the human pose gets +-0.05 rad uniform jitter at reset.
HUMAN_START_POSE = {
    TaskId.SCRATCH: np.array([-0.06, 0.0, 0.45]),
    TaskId.BEDBATH: np.array([-0.06, 0.0, 0.45]),
    TaskId.ARMASSIST: np.array([-0.90, 0.0, 0.50]),
}
ROBOT_START_POSE = np.array([0.0, 0.30, 0.0, -1.10, 0.0, 0.70, 0.0])

# Arm Assist targets: the grasp band on the forearm and the waist rest point.
GRASP_AXIAL_RANGE = (0.09, 0.17)
GRASP_SURFACE_OFFSET = 0.044
WAIST_TARGET_CENTER = np.array([0.24, -0.20, 0.62])
WAIST_TARGET_JITTER = 0.03
