"""Chain model serialization and the two embedded models.

Models are stored as version-1 JSON documents mirroring ChainModel.  The
embedded documents `robot7` (a 7-joint torque-controlled manipulator with a
probe end-effector) and `human-arm3` (a 3-joint right arm: two shoulder axes
and an elbow) are parsed through the same loader as user files.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import ContractViolationError
from .chain import ChainModel, LinkSpec
from .geometry import (CapsuleGeom, GROUP_DISABLED, GROUP_ROBOT, GROUP_SHARED)

_SCHEMA_VERSION = 1


def chain_to_dict(model: ChainModel) -> dict:
    return {
        "version": _SCHEMA_VERSION,
        "name": model.name,
        "gravity_scale": model.gravity_scale,
        "base": {"rot": model.base_rot.reshape(9).tolist(),
                 "pos": model.base_pos.tolist()},
        "tool": {"rot": model.tool_rot.reshape(9).tolist(),
                 "pos": model.tool_pos.tolist()},
        "links": [
            {
                "axis": l.axis.tolist(),
                "offset_rot": l.offset_rot.reshape(9).tolist(),
                "offset_pos": l.offset_pos.tolist(),
                "geom": {
                    "segment_start": l.geom.segment_start.tolist(),
                    "segment_end": l.geom.segment_end.tolist(),
                    "radius": l.geom.radius,
                    "collision_group": l.geom.collision_group,
                },
                "damping": l.damping,
                "torque_limit": l.torque_limit,
                "joint_limits": list(l.joint_limits),
            }
            for l in model.links
        ],
    }


def chain_from_dict(doc: dict) -> ChainModel:
    if doc.get("version") != _SCHEMA_VERSION:
        raise ContractViolationError(
            f"unsupported chain model version {doc.get('version')!r}")
    links = []
    for entry in doc["links"]:
        g = entry["geom"]
        links.append(LinkSpec(
            axis=np.asarray(entry["axis"], dtype=np.float64),
            offset_rot=np.asarray(entry["offset_rot"], dtype=np.float64).reshape(3, 3),
            offset_pos=np.asarray(entry["offset_pos"], dtype=np.float64),
            geom=CapsuleGeom(
                segment_start=np.asarray(g["segment_start"], dtype=np.float64),
                segment_end=np.asarray(g["segment_end"], dtype=np.float64),
                radius=float(g["radius"]),
                collision_group=int(g["collision_group"]),
            ),
            damping=float(entry["damping"]),
            torque_limit=float(entry["torque_limit"]),
            joint_limits=(float(entry["joint_limits"][0]),
                          float(entry["joint_limits"][1])),
        ))
    return ChainModel(
        name=doc["name"],
        links=tuple(links),
        tool_rot=np.asarray(doc["tool"]["rot"], dtype=np.float64).reshape(3, 3),
        tool_pos=np.asarray(doc["tool"]["pos"], dtype=np.float64),
        base_rot=np.asarray(doc["base"]["rot"], dtype=np.float64).reshape(3, 3),
        base_pos=np.asarray(doc["base"]["pos"], dtype=np.float64),
        gravity_scale=float(doc.get("gravity_scale", 1.0)),
    )


_I3 = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]


def _link(axis, offset_pos, seg_a, seg_b, radius, group, damping,
          torque_limit, limits):
    return {
        "axis": list(axis),
        "offset_rot": _I3,
        "offset_pos": list(offset_pos),
        "geom": {"segment_start": list(seg_a), "segment_end": list(seg_b),
                 "radius": radius, "collision_group": group},
        "damping": damping,
        "torque_limit": torque_limit,
        "joint_limits": list(limits),
    }


def _robot7_doc() -> dict:
    z, y = (0, 0, 1), (0, 1, 0)
    links = [
        _link(z, (0, 0, 0.15), (0, 0, 0), (0, 0, 0.10), 0.055, GROUP_DISABLED, 2.0, 5.0, (-2.9, 2.9)),
        _link(y, (0, 0, 0.10), (0, 0, 0), (0, 0, 0.15), 0.055, GROUP_DISABLED, 2.0, 5.0, (-1.9, 1.9)),
        _link(z, (0, 0, 0.15), (0, 0, 0), (0, 0, 0.15), 0.050, GROUP_DISABLED, 2.0, 5.0, (-2.9, 2.9)),
        _link(y, (0, 0, 0.15), (0, 0, 0), (0, 0, 0.15), 0.050, GROUP_DISABLED, 2.0, 5.0, (-1.9, 1.9)),
        _link(z, (0, 0, 0.15), (0, 0, 0), (0, 0, 0.12), 0.045, GROUP_DISABLED, 2.0, 5.0, (-2.9, 2.9)),
        _link(y, (0, 0, 0.12), (0, 0, 0), (0, 0, 0.10), 0.040, GROUP_DISABLED, 2.0, 5.0, (-1.9, 1.9)),
        # wrist roll carries the contact probe
        _link(z, (0, 0, 0.10), (0, 0, 0.03), (0, 0, 0.08), 0.025, GROUP_ROBOT, 2.0, 5.0, (-2.9, 2.9)),
    ]
    return {
        "version": _SCHEMA_VERSION,
        "name": "robot7",
        "gravity_scale": 0.0,   # gravity-compensated arm
        "base": {"rot": _I3, "pos": [0.0, 0.0, 0.0]},
        "tool": {"rot": _I3, "pos": [0.0, 0.0, 0.08]},
        "links": links,
    }


def _human_arm3_doc() -> dict:
    links = [
        # shoulder pitch: raises/lowers the arm; rest pose is at the upper stop
        _link((0, 1, 0), (0, 0, 0), (0, 0, 0), (0.02, 0, 0), 0.02,
              GROUP_DISABLED, 1.5, 4.0, (-1.5, 0.0)),
        # shoulder yaw: swings the arm horizontally; upper-arm capsule
        _link((0, 0, 1), (0, 0, 0), (0, 0, 0), (0.28, 0, 0), 0.045,
              GROUP_SHARED, 1.5, 4.0, (-0.9, 0.9)),
        # elbow flexion; forearm capsule
        _link((0, 0, 1), (0.28, 0, 0), (0, 0, 0), (0.26, 0, 0), 0.040,
              GROUP_SHARED, 1.5, 3.0, (0.0, 2.3)),
    ]
    return {
        "version": _SCHEMA_VERSION,
        "name": "human-arm3",
        "gravity_scale": 1.0,
        "base": {"rot": _I3, "pos": [0.0, 0.0, 0.0]},
        "tool": {"rot": _I3, "pos": [0.26, 0.0, 0.0]},  # wrist point
        "links": links,
    }


_BUILTINS = {
    "robot7": _robot7_doc,
    "human-arm3": _human_arm3_doc,
}


def builtin_chain_json(name: str) -> str:
    if name not in _BUILTINS:
        raise ContractViolationError(f"unknown builtin chain model {name!r}")
    return json.dumps(_BUILTINS[name](), indent=2)


def load_chain_model(source: str | Path) -> ChainModel:
    """Load a chain model by builtin name or JSON file path."""
    name = str(source)
    if name in _BUILTINS:
        return chain_from_dict(_BUILTINS[name]())
    return chain_from_dict(json.loads(Path(source).read_text()))
