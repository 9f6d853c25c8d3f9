"""Dense MLPs with hand-written backprop and an Adam optimizer.

Parameters live in plain numpy arrays. ``forward`` returns a cache that
``backward`` consumes; nothing is stored on the parameter objects, so the
same ``ParamSet`` can be evaluated from several places at once.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("tanh", "relu", "identity")
_ACT_ALIASES = {"tanh": "tanh", "relu": "relu", "identity": "identity", "linear": "identity"}


class ShapeError(ValueError):
    pass


class NonFiniteGradientError(FloatingPointError):
    pass


@dataclass
class Layer:
    weight: np.ndarray  # [out, in]
    bias: np.ndarray  # [out]
    activation: str = "identity"

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]


@dataclass
class ParamSet:
    layers: list[Layer] = field(default_factory=list)

    def __post_init__(self):
        for k in range(1, len(self.layers)):
            if self.layers[k].in_dim != self.layers[k - 1].out_dim:
                raise ShapeError(
                    f"layer {k} expects input dim {self.layers[k].in_dim} "
                    f"but layer {k - 1} outputs {self.layers[k - 1].out_dim}"
                )

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def dtype(self):
        return self.layers[0].weight.dtype

    def arrays(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.append(layer.weight)
            out.append(layer.bias)
        return out

    def with_arrays(self, arrays) -> "ParamSet":
        arrays = list(arrays)
        return ParamSet(
            [
                Layer(arrays[2 * i], arrays[2 * i + 1], layer.activation)
                for i, layer in enumerate(self.layers)
            ]
        )

    def copy(self) -> "ParamSet":
        return self.with_arrays(a.copy() for a in self.arrays())

    def astype(self, dtype) -> "ParamSet":
        return self.with_arrays(np.array(a, dtype=dtype, order="C") for a in self.arrays())

    def zeros_like(self) -> "ParamSet":
        return self.with_arrays(np.zeros_like(a) for a in self.arrays())

    def num_params(self) -> int:
        return sum(a.size for a in self.arrays())

    def __add__(self, other: "ParamSet") -> "ParamSet":
        """Chain two nets: ``self`` feeds ``other``."""
        return ParamSet(list(self.layers) + list(other.layers))

    def equals(self, other: "ParamSet") -> bool:
        if len(self.layers) != len(other.layers):
            return False
        return all(
            a.activation == b.activation
            and a.weight.dtype == b.weight.dtype
            and np.array_equal(a.weight, b.weight)
            and np.array_equal(a.bias, b.bias)
            for a, b in zip(self.layers, other.layers)
        )


@dataclass(frozen=True)
class Orthogonal:
    gain: float = 1.0


@dataclass(frozen=True)
class Uniform:
    scale: float = 1.0


def _orthogonal(rng: np.random.Generator, rows: int, cols: int, gain: float) -> np.ndarray:
    flat = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(flat)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q


def init_mlp(
    layer_sizes,
    activations,
    seed: int,
    scheme=Orthogonal(np.sqrt(2.0)),
    dtype=np.float32,
) -> ParamSet:
    """Build an MLP with zero biases.

    ``scheme`` may be a single scheme or one per layer.
    """
    layer_sizes = [int(s) for s in layer_sizes]
    if len(layer_sizes) < 2:
        raise ValueError("layer_sizes needs at least an input and an output size")
    if len(activations) != len(layer_sizes) - 1:
        raise ValueError(
            f"got {len(activations)} activations for {len(layer_sizes) - 1} layers"
        )
    schemes = list(scheme) if isinstance(scheme, (list, tuple)) else [scheme] * len(activations)
    if len(schemes) != len(activations):
        raise ValueError("one init scheme per layer required")
    rng = np.random.Generator(np.random.PCG64(int(seed)))
    layers = []
    for fan_in, fan_out, act, sch in zip(layer_sizes[:-1], layer_sizes[1:], activations, schemes):
        act = _ACT_ALIASES.get(str(act).lower())
        if act is None:
            raise ValueError(f"unknown activation; choose from {ACTIVATIONS}")
        if isinstance(sch, Orthogonal):
            w = _orthogonal(rng, fan_out, fan_in, sch.gain)
        elif isinstance(sch, Uniform):
            w = rng.uniform(-sch.scale, sch.scale, size=(fan_out, fan_in))
        else:
            raise TypeError(f"unknown init scheme {sch!r}")
        layers.append(Layer(np.ascontiguousarray(w, dtype=dtype), np.zeros(fan_out, dtype=dtype), act))
    return ParamSet(layers)


def _activate(act: str, z: np.ndarray) -> np.ndarray:
    if act == "tanh":
        return np.tanh(z)
    if act == "relu":
        return np.maximum(z, 0)
    return z


def forward(params: ParamSet, x: np.ndarray):
    """Evaluate the net on a ``[batch, in]`` input.

    Returns ``(output, cache)`` where cache holds each layer's input and
    post-activation output.
    """
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[1] != params.in_dim:
        raise ShapeError(
            f"input shape {x.shape} does not match network input [batch, {params.in_dim}]"
        )
    x = x.astype(params.dtype, copy=False)
    cache = []
    h = x
    for layer in params.layers:
        z = h @ layer.weight.T
        z += layer.bias
        out = _activate(layer.activation, z)
        cache.append((h, out))
        h = out
    return h, cache


def backward(params: ParamSet, cache, grad_output: np.ndarray):
    """Backpropagate ``grad_output`` (dL/d output) through the net.

    Returns ``(grads, grad_input)`` with ``grads`` congruent to ``params``.
    """
    if len(cache) != len(params.layers):
        raise ShapeError(f"cache has {len(cache)} entries for {len(params.layers)} layers")
    g = np.asarray(grad_output, dtype=params.dtype)
    grads = [None] * (2 * len(params.layers))
    for k in range(len(params.layers) - 1, -1, -1):
        layer = params.layers[k]
        h_in, h_out = cache[k]
        if h_out.shape != g.shape or h_in.shape[1] != layer.in_dim:
            raise ShapeError(
                f"stale cache at layer {k}: cached output {h_out.shape}, gradient {g.shape}"
            )
        if layer.activation == "tanh":
            g = g * (1 - h_out * h_out)
        elif layer.activation == "relu":
            g = g * (h_out > 0)
        grads[2 * k] = g.T @ h_in
        grads[2 * k + 1] = g.sum(axis=0)
        g = g @ layer.weight
    return params.with_arrays(grads), g


# --------------------------------------------------------------------------
# optimisation


@dataclass
class AdamState:
    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    step_count: int = 0

    @classmethod
    def zeros(cls, params: ParamSet) -> "AdamState":
        return cls(
            [np.zeros_like(a) for a in params.arrays()],
            [np.zeros_like(a) for a in params.arrays()],
            0,
        )


def adam_step(
    params: ParamSet,
    grads: ParamSet,
    state: AdamState,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
):
    """One bias-corrected Adam update. Returns new ``(params, state)``."""
    p_arr, g_arr = params.arrays(), grads.arrays()
    if len(p_arr) != len(g_arr) or len(p_arr) != len(state.first_moment):
        raise ShapeError("params, grads and optimizer state are not congruent")
    for p, g in zip(p_arr, g_arr):
        if p.shape != g.shape:
            raise ShapeError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError("non-finite gradient")
    t = state.step_count + 1
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(p_arr, g_arr, state.first_moment, state.second_moment):
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * (g * g)
        update = (m / bc1) / (np.sqrt(v / bc2) + eps)
        new_p.append((p - lr * update).astype(p.dtype, copy=False))
        new_m.append(m.astype(p.dtype, copy=False))
        new_v.append(v.astype(p.dtype, copy=False))
    return params.with_arrays(new_p), AdamState(new_m, new_v, t)


def global_norm(grads: ParamSet) -> float:
    return float(np.sqrt(sum(float(np.sum(np.square(a, dtype=np.float64))) for a in grads.arrays())))


def clip_grad_norm(grads: ParamSet, max_norm: float) -> tuple[ParamSet, float]:
    norm = global_norm(grads)
    if max_norm is None or max_norm <= 0 or norm <= max_norm:
        return grads, norm
    scale = max_norm / (norm + 1e-6)
    return grads.with_arrays(a * np.asarray(scale, dtype=a.dtype) for a in grads.arrays()), norm


# --------------------------------------------------------------------------
# gradient checking

LOSSES = {
    "sum": (lambda y: float(np.sum(y)), lambda y: np.ones_like(y)),
    "mean": (lambda y: float(np.mean(y)), lambda y: np.full_like(y, 1.0 / y.size)),
    "half_sq": (lambda y: 0.5 * float(np.sum(y * y)), lambda y: y.copy()),
}


def grad_check(params: ParamSet, x, loss: str = "sum", eps: float = 1e-3, backward_fn=None) -> float:
    """Max relative error between backprop and central finite differences.

    Runs in float64 regardless of the parameter dtype. ``backward_fn`` lets
    tests swap in a deliberately broken backward pass.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    value_fn, grad_fn = LOSSES[loss]
    backward_fn = backward_fn or backward
    p64 = params.astype(np.float64)
    x64 = np.asarray(x, dtype=np.float64)
    out, cache = forward(p64, x64)
    analytic, _ = backward_fn(p64, cache, grad_fn(out))

    worst = 0.0
    arrays = p64.arrays()
    for a, ga in zip(arrays, analytic.arrays()):
        flat = a.reshape(-1)
        gflat = ga.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            f = []
            for step in (2 * eps, eps, -eps, -2 * eps):
                flat[i] = orig + step
                f.append(value_fn(forward(p64, x64)[0]))
            flat[i] = orig
            # fourth-order central stencil
            numeric = (-f[0] + 8 * f[1] - 8 * f[2] + f[3]) / (12 * eps)
            denom = max(abs(gflat[i]), abs(numeric), 1e-8)
            worst = max(worst, abs(gflat[i] - numeric) / denom)
    return worst
