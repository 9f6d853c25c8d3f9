"""Spaces, transitions, random streams and the primitive registry.

Every swappable building block (encoder, distribution, storage, reward
module, augmentation, agent) is registered here under a ``(kind, name)``
pair together with its hyperparameter schema, so a configuration can be
validated in full before any environment is stepped.
"""
from __future__ import annotations

import difflib
import hashlib
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

OBS_DTYPE = np.float32
DISCRETE_ACTION_DTYPE = np.int64


class SpaceError(ValueError):
    pass


class RegistryError(KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


@dataclass(frozen=True)
class Discrete:
    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise SpaceError(f"Discrete space needs n >= 1, got {self.n!r}")

    @property
    def shape(self) -> tuple[int, ...]:
        return ()


@dataclass(frozen=True, eq=False)
class Box:
    shape: tuple[int, ...]
    low: np.ndarray
    high: np.ndarray

    def __init__(self, shape, low, high):
        shape = tuple(int(d) for d in np.atleast_1d(shape))
        if len(shape) == 0 or any(d < 1 for d in shape):
            raise SpaceError(f"Box shape must be nonempty with dims >= 1, got {shape}")
        low = np.broadcast_to(np.asarray(low, dtype=np.float64), shape).copy()
        high = np.broadcast_to(np.asarray(high, dtype=np.float64), shape).copy()
        if np.any(low > high):
            raise SpaceError("Box requires low <= high elementwise")
        low.flags.writeable = False
        high.flags.writeable = False
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "low", low)
        object.__setattr__(self, "high", high)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def bounded(self) -> bool:
        return bool(np.all(np.isfinite(self.low)) and np.all(np.isfinite(self.high)))

    def __eq__(self, other):
        return (
            isinstance(other, Box)
            and self.shape == other.shape
            and np.array_equal(self.low, other.low)
            and np.array_equal(self.high, other.high)
        )

    def __hash__(self):
        return hash((self.shape, self.low.tobytes(), self.high.tobytes()))

    def __repr__(self):
        return f"Box(shape={self.shape}, low={self.low.min()}.., high={self.high.max()}..)"


SpaceSpec = Discrete | Box


def validate(space: SpaceSpec, value) -> bool:
    """Return True iff ``value`` is a member of ``space``."""
    if isinstance(space, Discrete):
        arr = np.asarray(value)
        if arr.shape != ():
            return False
        if arr.dtype.kind in "iu":
            v = int(arr)
        elif arr.dtype.kind == "f" and float(arr).is_integer():
            v = int(arr)
        else:
            return False
        return 0 <= v < space.n
    try:
        arr = np.asarray(value, dtype=np.float64)
    except (TypeError, ValueError):
        return False
    if arr.shape != space.shape:
        return False
    if not np.all(np.isfinite(arr) | np.isinf(space.low) | np.isinf(space.high)):
        return False
    return bool(np.all(arr >= space.low) and np.all(arr <= space.high))


def sample_space(space: SpaceSpec, rng: np.random.Generator):
    if isinstance(space, Discrete):
        return DISCRETE_ACTION_DTYPE(rng.integers(0, space.n))
    if not space.bounded:
        raise SpaceError("cannot sample unbounded space")
    u = rng.random(space.shape)
    out = space.low + u * (space.high - space.low)
    # rounding in low + u*(high-low) can overshoot by one ulp
    out = np.clip(out, space.low, space.high)
    # float32 bounds rounded inward so the cast cannot leave the box
    lo32 = space.low.astype(OBS_DTYPE)
    lo32 = np.where(lo32 < space.low, np.nextafter(lo32, OBS_DTYPE(np.inf)), lo32)
    hi32 = space.high.astype(OBS_DTYPE)
    hi32 = np.where(hi32 > space.high, np.nextafter(hi32, OBS_DTYPE(-np.inf)), hi32)
    if np.any(lo32 > hi32):
        # no float32 lies inside some interval; keep full precision
        return out
    return np.clip(out.astype(OBS_DTYPE), lo32, hi32)


def flat_dim(space: SpaceSpec) -> int:
    return space.n if isinstance(space, Discrete) else space.size


def space_to_dict(space: SpaceSpec) -> dict:
    if isinstance(space, Discrete):
        return {"kind": "discrete", "n": space.n}
    return {
        "kind": "box",
        "shape": list(space.shape),
        "low": space.low.ravel().tolist(),
        "high": space.high.ravel().tolist(),
    }


@dataclass
class Transition:
    """One interaction step; fields may carry a leading env-batch axis."""

    obs: Any
    action: Any
    reward_ext: Any
    terminated: Any
    truncated: Any
    next_obs: Any
    reward_int: Any = 0.0


# --------------------------------------------------------------------------
# random streams


def _label_words(label: str) -> list[int]:
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]


def stream(seed: int, label: str = "") -> np.random.Generator:
    """PCG64 generator for the named sub-stream of ``seed``.

    The stream depends only on ``(seed, label)``, never on how many draws
    other streams have made.
    """
    seed = int(seed)
    if seed < 0:
        raise ValueError("seed must be nonnegative")
    entropy = [seed & 0xFFFFFFFF, seed >> 32, *_label_words(label)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


class Streams:
    """Factory of labelled sub-streams under one master seed."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._cache: dict[str, np.random.Generator] = {}

    def __call__(self, label: str) -> np.random.Generator:
        if label not in self._cache:
            self._cache[label] = stream(self.seed, label)
        return self._cache[label]

    def child_seed(self, label: str) -> int:
        return int(stream(self.seed, label).integers(0, 2**62))


def check_random_state(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None:
        return stream(0)
    if isinstance(rng, (int, np.integer)):
        return stream(int(rng))
    raise TypeError(f"cannot build a random stream from {type(rng).__name__}")


# --------------------------------------------------------------------------
# registry

KINDS = ("encoder", "distribution", "storage", "reward", "augmentation", "agent")


@dataclass
class Primitive:
    kind: str
    name: str
    factory: Callable | None
    schema: dict[str, Any] = field(default_factory=dict)
    doc: str = ""


_REGISTRY: dict[str, dict[str, Primitive]] = {k: {} for k in KINDS}


def register(kind: str, name: str, schema: dict[str, Any] | None = None, doc: str = ""):
    """Decorator registering ``factory`` as primitive ``name`` of ``kind``."""
    if kind not in _REGISTRY:
        raise RegistryError(f"unknown primitive kind {kind!r}; valid kinds: {', '.join(KINDS)}")

    def deco(factory):
        if name in _REGISTRY[kind] and _REGISTRY[kind][name].factory is not factory:
            raise RegistryError(f"{kind} {name!r} is already registered")
        _REGISTRY[kind][name] = Primitive(kind, name, factory, dict(schema or {}), doc)
        return factory

    return deco


def _ensure_builtin():
    # importing these modules populates the registry
    from . import agents, dist, storage, xplore  # noqa: F401


def resolve(kind: str, name: str) -> Primitive:
    _ensure_builtin()
    if kind not in _REGISTRY:
        raise RegistryError(f"unknown primitive kind {kind!r}; valid kinds: {', '.join(KINDS)}")
    table = _REGISTRY[kind]
    if name not in table:
        valid = sorted(table)
        hint = difflib.get_close_matches(str(name), valid, n=1)
        msg = f"unknown {kind} {name!r}; valid options: {', '.join(valid)}"
        if hint:
            msg += f" (did you mean {hint[0]!r}?)"
        raise RegistryError(msg)
    return table[name]


def available(kind: str) -> list[str]:
    _ensure_builtin()
    return sorted(_REGISTRY[kind])


def validate_options(kind: str, name: str, options: dict[str, Any]) -> dict[str, Any]:
    """Merge ``options`` over the schema defaults, rejecting unknown keys."""
    prim = resolve(kind, name)
    unknown = sorted(set(options) - set(prim.schema))
    if unknown:
        raise RegistryError(
            f"unknown option(s) {', '.join(unknown)} for {kind} {name!r}; "
            f"valid options: {', '.join(sorted(prim.schema)) or '(none)'}"
        )
    merged = dict(prim.schema)
    merged.update(options)
    return merged


def finite_or_raise(name: str, value) -> None:
    arr = np.asarray(value)
    if not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"non-finite value in {name}")
