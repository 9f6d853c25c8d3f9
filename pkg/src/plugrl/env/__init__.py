from .base import Env, EnvError, EnvSpec, StepResult, env_defaults, make, register_env, registered_envs
from .gridrooms import GridRoomsEnv, room_layout
from .pole import PoleEnv
from .vector import VecEnv, make_vec

__all__ = [
    "Env",
    "EnvError",
    "EnvSpec",
    "GridRoomsEnv",
    "PoleEnv",
    "StepResult",
    "VecEnv",
    "env_defaults",
    "make",
    "make_vec",
    "register_env",
    "registered_envs",
    "room_layout",
]
