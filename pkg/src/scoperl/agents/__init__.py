from .base import Agent, InsufficientSamplesError
from .cem import CEM, cem_update, elite_indices
from .ddpg import DDPG, ddpg_update
from .dqn import DDQN, DQN, dqn_targets, dqn_update
from .ppo import PPO, clipped_surrogate, gae
from .sac import SAC, sac_update, temperature_loss
from .tabular import SARSA, QLearning, qlearning_update, sarsa_update
from .td3 import TD3, smoothing_noise, td3_update
from .trpo import TRPO, conjugate_gradient, natural_gradient_direction

AGENTS = {
    "qlearning": QLearning,
    "sarsa": SARSA,
    "cem": CEM,
    "dqn": DQN,
    "ddqn": DDQN,
    "ddpg": DDPG,
    "td3": TD3,
    "sac": SAC,
    "ppo": PPO,
    "trpo": TRPO,
}

__all__ = [
    "AGENTS", "CEM", "DDPG", "DDQN", "DQN", "PPO", "SAC", "SARSA", "TD3", "TRPO", "Agent", "InsufficientSamplesError",
    "QLearning", "cem_update", "clipped_surrogate", "conjugate_gradient", "ddpg_update", "dqn_targets", "dqn_update",
    "elite_indices", "gae", "natural_gradient_direction", "qlearning_update", "sac_update", "sarsa_update",
    "smoothing_noise", "td3_update", "temperature_loss",
]
