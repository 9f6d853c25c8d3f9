import math

import numpy as np

from ..core import OBS_DTYPE, Box, Discrete
from .base import Env, EnvSpec, register_env

GRAVITY = 9.8
CART_MASS = 1.0
POLE_MASS = 0.1
TOTAL_MASS = CART_MASS + POLE_MASS
HALF_LENGTH = 0.5
POLE_MASS_LENGTH = POLE_MASS * HALF_LENGTH
FORCE_MAG = 10.0
TAU = 0.02
THETA_LIMIT = 12 * 2 * math.pi / 360
X_LIMIT = 2.4


def cartpole_derivs(state, force):
    """Cart and pole accelerations for the frictionless cart-pole."""
    _, x_dot, theta, theta_dot = state
    cos, sin = math.cos(theta), math.sin(theta)
    temp = (force + POLE_MASS_LENGTH * theta_dot**2 * sin) / TOTAL_MASS
    theta_acc = (GRAVITY * sin - cos * temp) / (
        HALF_LENGTH * (4.0 / 3.0 - POLE_MASS * cos**2 / TOTAL_MASS)
    )
    x_acc = temp - POLE_MASS_LENGTH * theta_acc * cos / TOTAL_MASS
    return x_acc, theta_acc


class PoleEnv(Env):
    """Cart-pole balancing. Action 0 pushes left, 1 pushes right."""

    def __init__(self, max_episode_steps: int = 500):
        super().__init__()
        high = np.array([X_LIMIT * 2, np.inf, THETA_LIMIT * 2, np.inf])
        self.spec = EnvSpec("pole-v0", Box((4,), -high, high), Discrete(2), int(max_episode_steps))
        self.state = (0.0, 0.0, 0.0, 0.0)

    def _reset(self, rng):
        self.state = tuple(float(v) for v in rng.uniform(-0.05, 0.05, size=4))
        return np.array(self.state, dtype=OBS_DTYPE)

    def _step(self, action):
        force = FORCE_MAG if int(action) == 1 else -FORCE_MAG
        x, x_dot, theta, theta_dot = self.state
        x_acc, theta_acc = cartpole_derivs(self.state, force)
        # semi-implicit Euler: velocities first, positions from new velocities
        x_dot = x_dot + TAU * x_acc
        x = x + TAU * x_dot
        theta_dot = theta_dot + TAU * theta_acc
        theta = theta + TAU * theta_dot
        self.state = (x, x_dot, theta, theta_dot)
        terminated = abs(x) > X_LIMIT or abs(theta) > THETA_LIMIT
        return np.array(self.state, dtype=OBS_DTYPE), 1.0, terminated, {}


register_env("pole-v0", PoleEnv, {"max_episode_steps": 500})
