"""Config-driven agent construction and the ``train`` entry point."""
from __future__ import annotations

from ..core import RegistryError, resolve, validate_options
from .base import TrainReport

# which primitives each algorithm accepts; None means any registered name
COMPATIBILITY = {
    "a2c": {"storage": ("rollout",), "distribution": ("auto", "categorical", "gaussian"), "augmentation": None},
    "ppo": {"storage": ("rollout",), "distribution": ("auto", "categorical", "gaussian"), "augmentation": None},
    "dqn": {"storage": ("replay", "prioritized"), "distribution": ("auto",), "augmentation": ("none",)},
}

# agent parameters naming a primitive, and the option dict that goes with each
PRIMITIVE_PARAMS = {
    "encoder": ("encoder", "encoder_options"),
    "distribution": ("distribution", "distribution_options"),
    "storage": ("storage", "storage_options"),
    "reward": ("reward", "reward_options"),
    "augmentation": ("augmentation", "augmentation_options"),
}


class ConfigError(ValueError):
    pass


def agent_defaults(algo: str) -> dict:
    return dict(resolve("agent", algo).schema)


def check_compatibility(algo: str, params: dict) -> None:
    table = COMPATIBILITY.get(algo)
    if table is None:
        return
    for kind, allowed in table.items():
        name = params.get(kind)
        if allowed is not None and name is not None and name not in allowed:
            raise ConfigError(
                f"{algo} cannot use {kind} {name!r}; compatible {kind} choices: {', '.join(allowed)}"
            )


def validate_agent_config(algo: str, params: dict) -> dict:
    """Defaults merged with ``params``; every primitive name and option checked.

    Raises before any environment is built or stepped.
    """
    try:
        merged = validate_options("agent", algo, dict(params))
    except RegistryError as exc:
        raise ConfigError(str(exc)) from None
    check_compatibility(algo, merged)
    for kind, (name_key, opts_key) in PRIMITIVE_PARAMS.items():
        if name_key not in merged:
            continue
        name = merged[name_key]
        if kind == "distribution" and name == "auto":
            if merged.get(opts_key):
                raise ConfigError("distribution options need an explicit distribution name")
            continue
        try:
            validate_options(kind, name, dict(merged.get(opts_key) or {}))
        except RegistryError as exc:
            raise ConfigError(str(exc)) from None
    return merged


def build_agent(algo: str, params: dict | None = None):
    merged = validate_agent_config(algo, params or {})
    return resolve("agent", algo).factory(**merged)


def train(config: dict, env_id: str, total_steps: int, seed: int = 0, eval_every: int = 10_000,
          env_config: dict | None = None, log=None) -> TrainReport:
    """Train ``config = {"algo": ..., **hyperparameters}`` and return its report."""
    config = dict(config)
    algo = config.pop("algo", None)
    if algo is None:
        raise ConfigError("agent config needs an 'algo' entry")
    config["seed"] = int(seed)
    agent = build_agent(algo, config)
    agent.fit(env_id, total_steps, env_config=env_config, eval_every=eval_every, log=log)
    return agent.report_


__all__ = [
    "COMPATIBILITY",
    "ConfigError",
    "agent_defaults",
    "build_agent",
    "check_compatibility",
    "train",
    "validate_agent_config",
]
