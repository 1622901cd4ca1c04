"""MARL baselines: IPPO, MAPPO, ISAC, MASAC, and single-learner variants."""

from .configs import (ALGORITHMS, PpoConfig, ROLES, SacConfig, TeamSpec,
                      default_config, is_ppo, team_spec_for, with_overrides)
from .gae import compute_gae
from .losses import (alpha_loss_and_grad, critic_loss_and_grad,
                     ppo_actor_loss_and_grad, sac_actor_loss_and_grad,
                     sac_q_loss_and_grad)
from .ppo import AgentRollout, RolloutBatch, flatten_rollout, normalize_advantages, ppo_update
from .replay import ReplayBuffer
from .sac import (SacAgent, make_sac_agent, polyak_update, q_target_values,
                  sac_actor_step, sac_q_step, sample_next_actions)
from .train import (ACTION_DIMS, FixedPartner, PopulationPartner, TeamResult,
                    ZeroPartner, deterministic_actor, evaluate_team,
                    train_team)

__all__ = [
    "ACTION_DIMS", "ALGORITHMS", "AgentRollout", "FixedPartner",
    "PopulationPartner", "PpoConfig", "ROLES", "ReplayBuffer", "RolloutBatch",
    "SacAgent", "SacConfig", "TeamResult", "TeamSpec", "ZeroPartner",
    "alpha_loss_and_grad", "compute_gae", "critic_loss_and_grad",
    "default_config", "deterministic_actor", "evaluate_team",
    "flatten_rollout", "is_ppo", "make_sac_agent", "normalize_advantages",
    "polyak_update", "ppo_actor_loss_and_grad", "ppo_update",
    "q_target_values", "sac_actor_loss_and_grad", "sac_actor_step",
    "sac_q_loss_and_grad", "sac_q_step", "sample_next_actions",
    "team_spec_for", "train_team", "with_overrides",
]
