"""Portable policy files and a forward-only inference runtime.

File layout (all integers little-endian)::

    header      8s magic "LTEMODEL" | u16 version | u16 flags (0) | u32 n_layers
    spaces      obs space, then action space, each:
                  u32 kind (0 discrete, 1 box)
                  discrete: u32 n
                  box:      u32 ndim | u32 dims[ndim] | f64 low[size] | f64 high[size]
    layers      n_layers x (u32 in | u32 out | u32 activation)
    weights     per layer: f32 W[out][in] row-major, then f32 b[out]
    checksum    u32 CRC-32 of every preceding byte

Activation tags: 0 identity, 1 tanh, 2 relu.
"""
from __future__ import annotations

import math
import struct
import threading
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .approx import Layer, ParamSet
from .core import Box, Discrete, SpaceSpec, flat_dim

MAGIC = b"LTEMODEL"
FORMAT_VERSION = 1
HEADER = struct.Struct("<8sHHI")
LAYER_ROW = struct.Struct("<III")
ACT_TAGS = {"identity": 0, "tanh": 1, "relu": 2}
TAG_ACTS = {v: k for k, v in ACT_TAGS.items()}


class DeployError(Exception):
    code = "deploy"


class BadMagicError(DeployError):
    code = "bad_magic"


class UnsupportedVersionError(DeployError):
    code = "unsupported_version"


class ChecksumError(DeployError):
    code = "checksum_mismatch"


class TruncationError(DeployError):
    code = "truncated"


class FormatError(DeployError):
    code = "malformed"


# --------------------------------------------------------------------------
# encoding


def _space_bytes(space: SpaceSpec) -> bytes:
    if isinstance(space, Discrete):
        return struct.pack("<II", 0, space.n)
    dims = space.shape
    return (
        struct.pack(f"<II{len(dims)}I", 1, len(dims), *dims)
        + space.low.astype("<f8").tobytes()
        + space.high.astype("<f8").tobytes()
    )


def _space_block_size(space: SpaceSpec) -> int:
    return len(_space_bytes(space))


def expected_size(params: ParamSet, obs_space: SpaceSpec, act_space: SpaceSpec) -> int:
    """Byte length of the file ``export_model`` writes for these inputs."""
    n_weights = sum(l.weight.size + l.bias.size for l in params.layers)
    return (
        HEADER.size
        + _space_block_size(obs_space)
        + _space_block_size(act_space)
        + LAYER_ROW.size * len(params.layers)
        + 4 * n_weights
        + 4
    )


def encode_model(params: ParamSet, obs_space: SpaceSpec, act_space: SpaceSpec) -> bytes:
    if not params.layers:
        raise ValueError("cannot export an empty network")
    if params.in_dim != flat_dim(obs_space):
        raise ValueError(f"network input {params.in_dim} != observation size {flat_dim(obs_space)}")
    if params.out_dim != flat_dim(act_space):
        raise ValueError(f"network output {params.out_dim} != action size {flat_dim(act_space)}")
    parts = [HEADER.pack(MAGIC, FORMAT_VERSION, 0, len(params.layers)), _space_bytes(obs_space),
             _space_bytes(act_space)]
    for layer in params.layers:
        out_dim, in_dim = layer.weight.shape
        parts.append(LAYER_ROW.pack(in_dim, out_dim, ACT_TAGS[layer.activation]))
    for layer in params.layers:
        parts.append(np.ascontiguousarray(layer.weight, dtype="<f4").tobytes())
        parts.append(np.ascontiguousarray(layer.bias, dtype="<f4").tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def export_model(params: ParamSet, obs_space: SpaceSpec, act_space: SpaceSpec, path) -> dict:
    """Write a model file; returns ``{path, bytes, checksum}``."""
    blob = encode_model(params, obs_space, act_space)
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(blob)
    return {"path": str(path), "bytes": len(blob), "checksum": f"{struct.unpack('<I', blob[-4:])[0]:08x}"}


# --------------------------------------------------------------------------
# decoding


class _Reader:
    def __init__(self, blob: bytes, limit: int):
        self.blob, self.pos, self.limit = blob, 0, limit

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > self.limit:
            raise TruncationError(
                f"file truncated while reading {what}: need at least {self.pos + n + 4} bytes, got {len(self.blob)}"
            )
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self, what: str, count: int = 1):
        vals = struct.unpack(f"<{count}I", self.take(4 * count, what))
        return vals[0] if count == 1 else vals


def _read_space(r: _Reader, what: str) -> SpaceSpec:
    kind = r.u32(f"{what} space kind")
    if kind == 0:
        n = r.u32(f"{what} space size")
        if n < 1:
            raise FormatError(f"{what} space: Discrete n must be >= 1")
        return Discrete(n)
    if kind != 1:
        raise FormatError(f"{what} space: unknown kind tag {kind}")
    ndim = r.u32(f"{what} space rank")
    if ndim < 1 or ndim > 8:
        raise FormatError(f"{what} space: unsupported rank {ndim}")
    dims = r.u32(f"{what} space dims", ndim)
    dims = (dims,) if ndim == 1 else tuple(dims)
    size = math.prod(dims)
    low = np.frombuffer(r.take(8 * size, f"{what} space bounds"), dtype="<f8").reshape(dims)
    high = np.frombuffer(r.take(8 * size, f"{what} space bounds"), dtype="<f8").reshape(dims)
    return Box(dims, low, high)


def decode_model(blob: bytes) -> tuple[ParamSet, SpaceSpec, SpaceSpec]:
    """Parse and verify a model file's bytes.

    Checks run in a fixed order so each corruption has one diagnosis:
    magic, version, structural length, exact length, checksum.
    """
    blob = bytes(blob)
    if len(blob) < len(MAGIC) or blob[: len(MAGIC)] != MAGIC:
        raise BadMagicError(f"bad magic {blob[:len(MAGIC)]!r}; expected {MAGIC!r}")
    if len(blob) < HEADER.size:
        raise TruncationError(f"file truncated: header needs {HEADER.size} bytes, got {len(blob)}")
    _, version, flags, n_layers = HEADER.unpack_from(blob)
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"unsupported format version {version}; this runtime reads {FORMAT_VERSION}")
    r = _Reader(blob, len(blob) - 4)
    r.pos = HEADER.size
    obs_space = _read_space(r, "observation")
    act_space = _read_space(r, "action")
    table = []
    for i in range(n_layers):
        in_dim, out_dim, tag = struct.unpack("<III", r.take(LAYER_ROW.size, f"layer table row {i}"))
        if tag not in TAG_ACTS:
            raise FormatError(f"layer {i}: unknown activation tag {tag}")
        table.append((in_dim, out_dim, TAG_ACTS[tag]))
    n_weights = sum(i * o + o for i, o, _ in table)
    expect = r.pos + 4 * n_weights + 4
    if len(blob) != expect:
        kind = "truncated" if len(blob) < expect else "has trailing bytes"
        raise TruncationError(f"file {kind}: expected {expect} bytes, got {len(blob)}")
    stored = struct.unpack_from("<I", blob, len(blob) - 4)[0]
    actual = zlib.crc32(blob[:-4])
    if stored != actual:
        raise ChecksumError(f"checksum mismatch: stored {stored:08x}, computed {actual:08x}")
    layers = []
    for in_dim, out_dim, act in table:
        w = np.frombuffer(r.take(4 * in_dim * out_dim, "weights"), dtype="<f4").reshape(out_dim, in_dim)
        b = np.frombuffer(r.take(4 * out_dim, "weights"), dtype="<f4")
        layers.append(Layer(w.astype(np.float32), b.astype(np.float32), act))
    try:
        params = ParamSet(layers)
    except ValueError as exc:
        raise FormatError(str(exc)) from None
    if params.in_dim != flat_dim(obs_space) or params.out_dim != flat_dim(act_space):
        raise FormatError("layer dims do not match the declared spaces")
    return params, obs_space, act_space


# --------------------------------------------------------------------------
# runtime

try:
    import numba as _nb
except ImportError:  # pragma: no cover - exercised only without numba
    _nb = None

# tanh as a [13/6] rational fit on the clamped range; max abs error 2.4e-7
_TANH_CLAMP = 7.90531110763549805


def _tanh_scalar(v):
    # rational approximation, accurate to float32 precision on the clamp range
    x = min(max(float(v), -_TANH_CLAMP), _TANH_CLAMP)
    x2 = x * x
    p = x2 * -2.76076847742355e-16 + 2.00018790482477e-13
    p = x2 * p + -8.60467152213735e-11
    p = x2 * p + 5.12229709037114e-08
    p = x2 * p + 1.48572235717979e-05
    p = x2 * p + 6.37261928875436e-04
    p = x2 * p + 4.89352455891786e-03
    q = x2 * 1.19825839466702e-06 + 1.18534705686654e-04
    q = x2 * q + 2.26843463243900e-03
    q = x2 * q + 4.89352518554385e-03
    return x * p / q


def _forward_kernel(flat, table, x, ws):
    # table rows: in, out, activation tag, weight offset, bias offset
    src = 0
    for j in range(x.shape[0]):
        ws[0, j] = x[j]
    for l in range(table.shape[0]):
        fi = table[l, 0]
        fo = table[l, 1]
        act = table[l, 2]
        wo = table[l, 3]
        bo = table[l, 4]
        dst = 1 - src
        a = ws[src]
        out = ws[dst]
        for o in range(fo):
            acc = np.float64(flat[bo + o])
            w = flat[wo + o * fi : wo + (o + 1) * fi]
            for i in range(fi):
                acc += w[i] * a[i]
            out[o] = acc
        if act == 1:
            for o in range(fo):
                out[o] = _tanh(out[o])
        elif act == 2:
            for o in range(fo):
                if out[o] < 0:
                    out[o] = 0
        src = dst
    return src


def _argmax_kernel(flat, table, x, ws):
    row = _forward(flat, table, x, ws)
    out = ws[row]
    best = 0
    for i in range(1, table[table.shape[0] - 1, 1]):
        if out[i] > out[best]:
            best = i
    return best


if _nb is not None:
    _tanh = _nb.njit(inline="always", fastmath=True, cache=True)(_tanh_scalar)
    _forward = _nb.njit(fastmath=True, cache=True)(_forward_kernel)
    _argmax = _nb.njit(fastmath=True, cache=True)(_argmax_kernel)
    HAVE_JIT = True
else:  # pragma: no cover
    _tanh = _tanh_scalar
    _forward = _forward_kernel
    _argmax = _argmax_kernel
    HAVE_JIT = False


class Workspace:
    """Scratch buffers for one caller; reused across ``infer`` calls."""

    def __init__(self, width: int, act_size: int):
        self.hidden = np.zeros((2, width), dtype=np.float64)
        self.action = np.zeros(act_size, dtype=np.float32)


@dataclass(frozen=True, eq=False)
class InferencePolicy:
    """Forward-only policy loaded from a model file. Immutable after load."""

    params: ParamSet
    obs_space: SpaceSpec
    act_space: SpaceSpec

    def __post_init__(self):
        chunks, rows, off = [], [], 0
        for layer in self.params.layers:
            out_dim, in_dim = layer.weight.shape
            rows.append((in_dim, out_dim, ACT_TAGS[layer.activation], off, off + in_dim * out_dim))
            chunks += [layer.weight.ravel(), layer.bias]
            off += in_dim * out_dim + out_dim
        flat = np.concatenate(chunks).astype(np.float32)
        table = np.array(rows, dtype=np.int64)
        flat.flags.writeable = False
        table.flags.writeable = False
        object.__setattr__(self, "_flat", flat)
        object.__setattr__(self, "_table", table)
        width = max(max(r[0], r[1]) for r in rows)
        object.__setattr__(self, "_width", width)
        object.__setattr__(self, "_obs_size", flat_dim(self.obs_space))
        object.__setattr__(self, "_discrete", isinstance(self.act_space, Discrete))
        if not self._discrete:
            object.__setattr__(self, "_low", self.act_space.low.ravel().astype(np.float32))
            object.__setattr__(self, "_high", self.act_space.high.ravel().astype(np.float32))
        object.__setattr__(self, "_local", threading.local())

    def new_workspace(self) -> Workspace:
        return Workspace(self._width, flat_dim(self.act_space))

    def _workspace(self) -> Workspace:
        ws = getattr(self._local, "ws", None)
        if ws is None:
            ws = self._local.ws = self.new_workspace()
        return ws

    def _as_input(self, obs):
        x = obs
        if not (isinstance(x, np.ndarray) and x.dtype == np.float32 and x.ndim == 1 and x.flags.c_contiguous):
            x = np.ascontiguousarray(obs, dtype=np.float32).reshape(-1)
        if x.size != self._obs_size:
            raise ValueError(f"observation has {x.size} values; the model expects {self._obs_size}")
        return x

    def infer(self, obs, workspace: Workspace | None = None):
        """Deterministic action for one observation.

        Discrete: argmax of the logits, ties to the lowest index. Box: the
        Gaussian mean clipped to the bounds, written into the workspace's
        action buffer (copy it if you keep it across calls).
        """
        x = self._as_input(obs)
        ws = workspace if workspace is not None else self._workspace()
        if self._discrete:
            return int(_argmax(self._flat, self._table, x, ws.hidden))
        row = _forward(self._flat, self._table, x, ws.hidden)
        n = ws.action.shape[0]
        np.clip(ws.hidden[row, :n], self._low, self._high, out=ws.action)
        return ws.action

    def forward(self, obs) -> np.ndarray:
        """Raw network outputs for a batch of observations."""
        obs = np.asarray(obs, dtype=np.float32)
        single = obs.size == self._obs_size and obs.ndim <= 1
        batch = obs.reshape(-1, self._obs_size)
        ws = self.new_workspace()
        out = np.empty((len(batch), self.params.out_dim), dtype=np.float32)
        for i, x in enumerate(batch):
            row = _forward(self._flat, self._table, np.ascontiguousarray(x), ws.hidden)
            out[i] = ws.hidden[row, : self.params.out_dim]
        return out[0] if single else out

    def act_batch(self, obs) -> np.ndarray:
        out = self.forward(np.asarray(obs, dtype=np.float32).reshape(-1, self._obs_size))
        if self._discrete:
            return np.argmax(out, axis=1)
        return np.clip(out, self._low, self._high)


def load_model(path) -> InferencePolicy:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no model file at {path}")
    params, obs_space, act_space = decode_model(path.read_bytes())
    return InferencePolicy(params, obs_space, act_space)


def infer(policy: InferencePolicy, obs, workspace: Workspace | None = None):
    return policy.infer(obs, workspace)


def benchmark(policy: InferencePolicy, n: int = 200_000, seed: int = 0) -> float:
    """Single-observation inferences per second on one thread."""
    import time

    rng = np.random.default_rng(seed)
    obs = rng.standard_normal((256, policy._obs_size)).astype(np.float32)
    ws = policy.new_workspace()
    policy.infer(obs[0], ws)
    start = time.perf_counter()
    for i in range(n):
        policy.infer(obs[i & 255], ws)
    return n / (time.perf_counter() - start)


__all__ = [
    "BadMagicError",
    "ChecksumError",
    "DeployError",
    "FORMAT_VERSION",
    "FormatError",
    "HAVE_JIT",
    "InferencePolicy",
    "MAGIC",
    "TruncationError",
    "UnsupportedVersionError",
    "Workspace",
    "benchmark",
    "decode_model",
    "encode_model",
    "expected_size",
    "export_model",
    "infer",
    "load_model",
]
