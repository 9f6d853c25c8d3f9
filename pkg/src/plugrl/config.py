"""Declarative TOML experiment configs.

Sections mirror the primitive kinds::

    [agent]         algo plus agent hyperparameters (lr, gamma, horizon, ...)
    [encoder]       name plus encoder options
    [distribution]  name plus distribution options
    [storage]       name plus storage options
    [xplore]        reward, reward_options, beta0, kappa,
                    augmentation, augmentation_options
    [env]           id plus env options
    [train]         total_steps, seed, eval_every
    [eval]          episodes
    [hub]           store (path or ""), ingest

Precedence is override > file > registry default. ``--set`` keys are dotted
(``agent.lr=5e-4``); a bare key is looked up in ``[agent]``.
"""
from __future__ import annotations

import difflib
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib
import tomli_w

from .agents.train import ConfigError, PRIMITIVE_PARAMS, agent_defaults, validate_agent_config
from .core import RegistryError, available, resolve, validate_options
from .env import env_defaults, registered_envs

HUB_ENV_VAR = "PLUGRL_HUB"

SECTIONS = ("agent", "encoder", "distribution", "storage", "xplore", "env", "train", "eval", "hub")
TRAIN_DEFAULTS = {"total_steps": 200_000, "seed": 0, "eval_every": 10_000}
HUB_DEFAULTS = {"store": "", "ingest": True}
XPLORE_KEYS = ("reward", "reward_options", "beta0", "kappa", "augmentation", "augmentation_options")
DEFAULT_ALGO = "ppo"
DEFAULT_ENV = "pole-v0"


def _unknown(what, key, valid):
    valid = sorted(valid)
    hint = difflib.get_close_matches(str(key), valid, n=1)
    msg = f"unknown {what} {key!r}; valid options: {', '.join(valid) or '(none)'}"
    if hint:
        msg += f" (did you mean {hint[0]!r}?)"
    return ConfigError(msg)


@dataclass
class ResolvedConfig:
    algo: str
    agent: dict
    env_id: str
    env_config: dict
    seed: int
    total_steps: int
    eval_every: int
    hub_store: str = ""
    hub_ingest: bool = True
    out_dir: str | None = None
    extras: dict = field(default_factory=dict)

    def agent_params(self) -> dict:
        params = dict(self.agent)
        params["seed"] = self.seed
        return params

    def to_dict(self) -> dict:
        """Nested sections; parsing this back yields the same config."""
        a = dict(self.agent)
        sections = {"agent": {"algo": self.algo}}
        for kind, (name_key, opts_key) in PRIMITIVE_PARAMS.items():
            if name_key in a:
                name = a.pop(name_key)
                opts = a.pop(opts_key, None) or {}
                if kind in ("reward", "augmentation"):
                    sections.setdefault("xplore", {})[name_key] = name
                    sections["xplore"][opts_key] = dict(opts)
                else:
                    sections[kind] = {"name": name, **opts}
        for k in ("beta0", "kappa"):
            if k in a:
                sections.setdefault("xplore", {})[k] = a.pop(k)
        a.pop("seed", None)
        eval_episodes = a.pop("eval_episodes", None)
        sections["agent"].update(a)
        sections["env"] = {"id": self.env_id, **self.env_config}
        sections["train"] = {"total_steps": self.total_steps, "seed": self.seed, "eval_every": self.eval_every}
        if eval_episodes is not None:
            sections["eval"] = {"episodes": eval_episodes}
        sections["hub"] = {"store": self.hub_store, "ingest": self.hub_ingest}
        return _drop_none(sections)

    def to_toml(self) -> str:
        return tomli_w.dumps(self.to_dict())


def _drop_none(d):
    if isinstance(d, dict):
        return {k: _drop_none(v) for k, v in d.items() if v is not None}
    if isinstance(d, (list, tuple)):
        return [_drop_none(v) for v in d]
    return d


def parse_value(text: str):
    """TOML scalar/array/table literal, or the raw string if it is not one."""
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def _apply_override(doc: dict, item: str) -> None:
    if "=" not in item:
        raise ConfigError(f"override {item!r} must look like key=value")
    key, _, raw = item.partition("=")
    parts = key.strip().split(".")
    if len(parts) == 1:
        parts = ["agent", parts[0]]
    if parts[0] not in SECTIONS:
        raise _unknown("config section", parts[0], SECTIONS)
    node = doc
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {key!r} descends into a non-table value")
    node[parts[-1]] = parse_value(raw.strip())


def load_toml(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        # message carries "(at line L, column C)"
        raise ConfigError(f"{path}: {exc}") from None


def _named_section(doc, kind, default_name):
    sec = dict(doc.get(kind, {}))
    name = sec.pop("name", default_name)
    return name, sec


def resolve_document(doc: dict, overrides=(), out_dir=None) -> ResolvedConfig:
    doc = {k: (dict(v) if isinstance(v, dict) else v) for k, v in doc.items()}
    for item in overrides or ():
        _apply_override(doc, item)
    for sec, val in doc.items():
        if sec not in SECTIONS:
            raise _unknown("config section", sec, SECTIONS)
        if not isinstance(val, dict):
            raise ConfigError(f"[{sec}] must be a table")

    agent_sec = dict(doc.get("agent", {}))
    algo = str(agent_sec.pop("algo", DEFAULT_ALGO)).lower()
    try:
        resolve("agent", algo)
    except RegistryError as exc:
        raise ConfigError(str(exc)) from None
    defaults = agent_defaults(algo)
    module_keys = {k for pair in PRIMITIVE_PARAMS.values() for k in pair} | {"beta0", "kappa", "seed",
                                                                             "eval_episodes"}
    hyper = sorted(set(defaults) - module_keys)
    for k in agent_sec:
        if k not in hyper:
            raise _unknown(f"[agent] key for {algo}", k, ["algo", *hyper])
    params = dict(agent_sec)

    for kind in ("encoder", "distribution", "storage"):
        name_key, opts_key = PRIMITIVE_PARAMS[kind]
        if kind not in doc:
            continue
        if name_key not in defaults:
            raise ConfigError(f"{algo} has no {kind} slot; remove the [{kind}] section")
        name, opts = _named_section(doc, kind, defaults.get(name_key))
        params[name_key] = name
        if opts_key in defaults:
            params[opts_key] = opts or None
        elif opts:
            try:
                validate_options(kind, name, opts)
            except RegistryError as exc:
                raise ConfigError(str(exc)) from None

    xp = dict(doc.get("xplore", {}))
    for k in xp:
        if k not in XPLORE_KEYS:
            raise _unknown("[xplore] key", k, XPLORE_KEYS)
    params.update(xp)

    eval_sec = dict(doc.get("eval", {}))
    for k in eval_sec:
        if k != "episodes":
            raise _unknown("[eval] key", k, ["episodes"])
    if "episodes" in eval_sec:
        params["eval_episodes"] = eval_sec["episodes"]

    train_sec = {**TRAIN_DEFAULTS, **doc.get("train", {})}
    for k in train_sec:
        if k not in TRAIN_DEFAULTS:
            raise _unknown("[train] key", k, TRAIN_DEFAULTS)
    for k in TRAIN_DEFAULTS:
        v = train_sec[k]
        if isinstance(v, bool) or not isinstance(v, int) or v < 0:
            raise ConfigError(f"[train] {k} must be a nonnegative integer, got {v!r}")

    for name_key, opts_key in PRIMITIVE_PARAMS.values():
        if name_key in params and isinstance(params[name_key], str):
            params[name_key] = params[name_key].lower()
    params.pop("seed", None)
    merged = validate_agent_config(algo, {**params, "seed": train_sec["seed"]})
    merged.pop("seed")
    # expand primitive option dicts so the effective config lists every value
    for kind, (name_key, opts_key) in PRIMITIVE_PARAMS.items():
        if opts_key in merged and not (kind == "distribution" and merged[name_key] == "auto"):
            merged[opts_key] = validate_options(kind, merged[name_key], dict(merged.get(opts_key) or {}))

    env_sec = dict(doc.get("env", {}))
    env_id = env_sec.pop("id", DEFAULT_ENV)
    if env_id not in registered_envs():
        raise _unknown("env id", env_id, registered_envs())
    env_valid = env_defaults(env_id)
    for k in env_sec:
        if k not in env_valid:
            raise _unknown(f"[env] key for {env_id}", k, ["id", *env_valid])
    env_config = {**env_valid, **env_sec}

    hub_sec = {**HUB_DEFAULTS, **doc.get("hub", {})}
    for k in hub_sec:
        if k not in HUB_DEFAULTS:
            raise _unknown("[hub] key", k, HUB_DEFAULTS)

    return ResolvedConfig(
        algo=algo,
        agent=merged,
        env_id=env_id,
        env_config=env_config,
        seed=train_sec["seed"],
        total_steps=train_sec["total_steps"],
        eval_every=train_sec["eval_every"],
        hub_store=str(hub_sec["store"]),
        hub_ingest=bool(hub_sec["ingest"]),
        out_dir=out_dir,
    )


def parse_config(path=None, overrides=(), out_dir=None) -> ResolvedConfig:
    """Load ``path`` (or nothing), apply overrides, validate everything."""
    doc = load_toml(path) if path is not None else {}
    return resolve_document(doc, overrides, out_dir)


def hub_store_path(cfg_store: str | None = None) -> str | None:
    """Explicit store, else the ``PLUGRL_HUB`` environment variable."""
    if cfg_store:
        return cfg_store
    return os.environ.get(HUB_ENV_VAR) or None


def compatibility_table() -> list[tuple[str, str, str]]:
    from .agents.train import COMPATIBILITY

    rows = []
    for algo, kinds in COMPATIBILITY.items():
        for kind, allowed in kinds.items():
            rows.append((algo, kind, ", ".join(allowed) if allowed else ", ".join(available(kind))))
    return rows


__all__ = [
    "ConfigError",
    "HUB_ENV_VAR",
    "ResolvedConfig",
    "compatibility_table",
    "hub_store_path",
    "load_toml",
    "parse_config",
    "parse_value",
    "resolve_document",
]
