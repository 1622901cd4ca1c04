"""Algorithm hyperparameter records; defaults follow the tuned settings."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from ..errors import ContractViolationError

ROLES = ("robot", "human")


@dataclass(frozen=True)
class PpoConfig:
    rollout_steps: int = 64
    num_envs: int = 1024
    epochs: int = 4
    minibatches: int = 4
    lr: float = 1e-3
    anneal_lr: bool = False
    entropy_coef: float = 1e-4
    clip_eps: float = 0.31
    gamma: float = 0.99
    gae_lambda: float = 0.95
    value_coef: float = 1.0
    max_grad_norm: float = 0.5
    adam_eps: float = 1e-8

    @classmethod
    def ippo_defaults(cls) -> "PpoConfig":
        return cls()

    @classmethod
    def mappo_defaults(cls) -> "PpoConfig":
        return cls(rollout_steps=128, lr=4.4e-3, entropy_coef=2.7e-4,
                   clip_eps=0.11)


@dataclass(frozen=True)
class SacConfig:
    exploration_steps: int = 5000
    policy_delay: int = 4
    buffer_size: int = 1_000_000
    batch_size: int = 128
    policy_lr: float = 3e-4
    q_lr: float = 1e-3
    alpha_lr: float = 3e-4
    max_grad_norm: float = 10.0
    tau: float = 0.005
    gamma: float = 0.99
    updates_per_iteration: int = 32
    rollout_length: int = 8
    autotune: bool = True
    # target entropy = -scale * action_dim
    target_entropy_scale: float = 5.0
    initial_alpha: float = 0.1
    num_envs: int = 64

    @classmethod
    def isac_defaults(cls) -> "SacConfig":
        return cls()

    @classmethod
    def masac_defaults(cls) -> "SacConfig":
        # the printed lrs "3x3^-4" / "1x2^-4" are read as 3e-4 / 1e-4
        return cls(policy_lr=3e-4, q_lr=1e-4, alpha_lr=3e-4)


@dataclass(frozen=True)
class TeamSpec:
    """Which roles learn, how critics see the world, and frozen partners."""

    learners: tuple[str, ...] = ROLES
    critic_mode: str = "independent"          # or "centralized"
    fixed_partners: dict = field(default_factory=dict)  # role -> checkpoint path

    def __post_init__(self):
        if not self.learners:
            raise ContractViolationError("at least one learner role required")
        for r in self.learners:
            if r not in ROLES:
                raise ContractViolationError(f"unknown role {r!r}")
        if self.critic_mode not in ("independent", "centralized"):
            raise ContractViolationError(f"bad critic mode {self.critic_mode!r}")
        for r in ROLES:
            if r not in self.learners and r not in self.fixed_partners and r != "human":
                raise ContractViolationError(f"role {r!r} neither learns nor has a partner")


ALGORITHMS = ("ippo", "mappo", "isac", "masac", "ppo", "sac")


def team_spec_for(algorithm: str) -> TeamSpec:
    """Default spec: MARL variants train both roles; SARL trains the robot."""
    algorithm = algorithm.lower()
    if algorithm not in ALGORITHMS:
        raise ContractViolationError(f"unknown algorithm {algorithm!r}")
    if algorithm in ("ippo", "isac"):
        return TeamSpec(learners=ROLES, critic_mode="independent")
    if algorithm in ("mappo", "masac"):
        return TeamSpec(learners=ROLES, critic_mode="centralized")
    return TeamSpec(learners=("robot",), critic_mode="independent")


def default_config(algorithm: str):
    algorithm = algorithm.lower()
    if algorithm in ("ippo", "ppo"):
        return PpoConfig.ippo_defaults()
    if algorithm == "mappo":
        return PpoConfig.mappo_defaults()
    if algorithm in ("isac", "sac"):
        return SacConfig.isac_defaults()
    if algorithm == "masac":
        return SacConfig.masac_defaults()
    raise ContractViolationError(f"unknown algorithm {algorithm!r}")


def is_ppo(algorithm: str) -> bool:
    return algorithm.lower() in ("ippo", "mappo", "ppo")


def with_overrides(cfg, **kwargs):
    valid = {f for f in cfg.__dataclass_fields__}
    unknown = set(kwargs) - valid
    if unknown:
        raise ContractViolationError(f"unknown config fields {sorted(unknown)}")
    return replace(cfg, **kwargs)
