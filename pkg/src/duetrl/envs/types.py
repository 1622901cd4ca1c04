"""Task identifiers, human parameterization, and environment state records."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ..errors import ContractViolationError
from ..simcore import ChainState, ContactInfo


class TaskId(str, Enum):
    SCRATCH = "scratch"
    BEDBATH = "bedbath"
    ARMASSIST = "armassist"

    @classmethod
    def parse(cls, value) -> "TaskId":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower().replace("-", "").replace("_", ""))
        except ValueError:
            raise ContractViolationError(f"unknown task {value!r}") from None


@dataclass(frozen=True)
class DisabilityProfile:
    """Human impairment parameters.

    strength_multiplier scales commanded joint torques, elbow_rom_fraction
    shrinks the elbow's travel range around its midpoint, and the tremor pair
    parameterizes a zero-mean Ornstein-Uhlenbeck torque noise whose stationary
    standard deviation is tremor_amplitude.
    """

    strength_multiplier: float = 1.0
    elbow_rom_fraction: float = 1.0
    tremor_amplitude: float = 0.0      # N*m
    tremor_timescale: float = 0.5      # s

    def __post_init__(self):
        if not 0.0 < self.strength_multiplier <= 1.0:
            raise ContractViolationError("strength_multiplier must be in (0, 1]")
        if not 0.0 < self.elbow_rom_fraction <= 1.0:
            raise ContractViolationError("elbow_rom_fraction must be in (0, 1]")
        if self.tremor_amplitude < 0.0:
            raise ContractViolationError("tremor_amplitude must be >= 0")
        if not self.tremor_timescale > 0.0:
            raise ContractViolationError("tremor_timescale must be positive")


@dataclass(frozen=True)
class RewardWeights:
    scale_reach: float = 1.0
    scale_scratch: float = 1.0
    scale_wipe: float = 1.0
    scale_waist: float = 10.0
    scale_rotation: float = 0.1
    sigma: float = 0.1
    target_force: float = 3.0       # N
    target_velocity: float = 0.05   # m/s

    def __post_init__(self):
        if not self.sigma > 0.0:
            raise ContractViolationError("sigma must be positive")
        if not (self.target_force > 0.0 and self.target_velocity > 0.0):
            raise ContractViolationError("force/velocity targets must be positive")


DEFAULT_REWARD_WEIGHTS = RewardWeights()

HORIZON = 1000
WIPE_TARGET_COUNT = 52
PROXIMITY_RADIUS = 0.1   # the [d < 0.1] indicator radius


@dataclass
class EnvState:
    """Full state of one task instance.

    Targets attached to the human arm are stored in link-local coordinates
    (link index + local point) so they ride along with the arm; world
    positions are recovered through forward kinematics.  Only the fields of
    the active task are populated.
    """

    task: TaskId
    robot: ChainState
    human: ChainState
    profile: DisabilityProfile
    tremor_state: np.ndarray                 # (3,) OU torque noise memory
    t: int
    rng_state: int                           # splitmix64 stream state
    last_contact: ContactInfo = field(default_factory=ContactInfo)
    # Scratch
    scratch_link: int | None = None
    scratch_local: np.ndarray | None = None
    # Bed Bath
    wipe_links: np.ndarray | None = None     # (52,)
    wipe_locals: np.ndarray | None = None    # (52, 3)
    wipe_active: np.ndarray | None = None    # (52,) bool
    # Arm Assist
    grasp_local: np.ndarray | None = None    # (3,) forearm-local grasp point
    waist_target: np.ndarray | None = None   # (3,) world


@dataclass
class StepResult:
    next_state: EnvState
    obs: dict[str, np.ndarray]   # keys "robot", "human"
    reward: float
    done: bool
