from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from ..core import SpaceSpec, stream, validate


class EnvError(RuntimeError):
    pass


@dataclass(frozen=True)
class EnvSpec:
    id: str
    obs_space: SpaceSpec
    act_space: SpaceSpec
    max_episode_steps: int

    def __post_init__(self):
        if self.max_episode_steps < 1:
            raise ValueError("max_episode_steps must be >= 1")


@dataclass
class StepResult:
    obs: Any
    reward: float
    terminated: bool
    truncated: bool
    info: dict = field(default_factory=dict)

    def __iter__(self):
        return iter((self.obs, self.reward, self.terminated, self.truncated, self.info))


class Env:
    """Five-tuple environment base.

    Subclasses implement ``_reset`` and ``_step``; this class owns seeding,
    action validation, episode bookkeeping and truncation.
    """

    spec: EnvSpec

    def __init__(self):
        self._rng = None
        self._elapsed = 0
        self._needs_reset = True

    @property
    def observation_space(self) -> SpaceSpec:
        return self.spec.obs_space

    @property
    def action_space(self) -> SpaceSpec:
        return self.spec.act_space

    def reset(self, seed: int | None = None):
        if seed is not None:
            self._rng = stream(seed, "env")
        elif self._rng is None:
            self._rng = stream(0, "env")
        self._elapsed = 0
        self._needs_reset = False
        obs = self._reset(self._rng)
        return obs, {}

    def step(self, action) -> StepResult:
        if self._needs_reset:
            raise EnvError("step() called before reset() or after the episode ended")
        if not validate(self.spec.act_space, action):
            raise EnvError(f"invalid action {action!r} for {self.spec.act_space}")
        obs, reward, terminated, info = self._step(action)
        self._elapsed += 1
        truncated = (not terminated) and self._elapsed >= self.spec.max_episode_steps
        if terminated or truncated:
            self._needs_reset = True
        return StepResult(obs, float(reward), bool(terminated), bool(truncated), info)

    def _reset(self, rng: np.random.Generator):
        raise NotImplementedError

    def _step(self, action):
        raise NotImplementedError


_ENVS: dict[str, tuple[Callable[..., Env], dict[str, Any]]] = {}


def register_env(env_id: str, constructor: Callable[..., Env], defaults: dict[str, Any] | None = None):
    """Register ``constructor(**config)`` under ``env_id``.

    ``defaults`` lists every accepted config key; anything else passed to
    :func:`make` is rejected.
    """
    _ENVS[env_id] = (constructor, dict(defaults or {}))


def registered_envs() -> list[str]:
    return sorted(_ENVS)


def env_defaults(env_id: str) -> dict[str, Any]:
    if env_id not in _ENVS:
        raise EnvError(f"unknown env id {env_id!r}; registered: {', '.join(registered_envs())}")
    return dict(_ENVS[env_id][1])


def make(env_id: str, config: dict[str, Any] | None = None) -> Env:
    if env_id not in _ENVS:
        raise EnvError(f"unknown env id {env_id!r}; registered: {', '.join(registered_envs())}")
    ctor, defaults = _ENVS[env_id]
    config = dict(config or {})
    unknown = sorted(set(config) - set(defaults))
    if unknown:
        raise EnvError(
            f"unknown config key(s) {', '.join(unknown)} for {env_id}; "
            f"valid keys: {', '.join(sorted(defaults)) or '(none)'}"
        )
    kwargs = {**defaults, **config}
    return ctor(**kwargs)
