from .base import BaseAgent, TrainingError, TrainReport
from .losses import LossError, a2c_loss, dqn_loss, ppo_loss
from .dqn import DQN
from .onpolicy import A2C, PPO
from .policy import Policy, evaluate_policy
from .train import COMPATIBILITY, ConfigError, build_agent, train, validate_agent_config

__all__ = [
    "A2C",
    "DQN",
    "PPO",
    "BaseAgent",
    "COMPATIBILITY",
    "ConfigError",
    "LossError",
    "Policy",
    "TrainReport",
    "TrainingError",
    "a2c_loss",
    "build_agent",
    "dqn_loss",
    "evaluate_policy",
    "ppo_loss",
    "train",
    "validate_agent_config",
]
