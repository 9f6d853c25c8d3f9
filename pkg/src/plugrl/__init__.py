"""Composable reinforcement learning: primitives, agents, evaluation, hub, deploy."""
__version__ = "0.1.0"

from .core import Box, Discrete, Transition, available, register, resolve, stream  # noqa: E402
from .env import make  # noqa: E402

__all__ = ["Box", "Discrete", "Transition", "__version__", "available", "make", "register", "resolve", "stream"]
