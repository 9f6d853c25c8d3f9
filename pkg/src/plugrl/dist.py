"""Action distributions: categorical over logits and diagonal Gaussian.

Each family exposes log-prob/entropy, sampling, and the backward pass of
log-prob/entropy with respect to its parameters, which the agents chain
into the network backward.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import register

HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)
HALF_LOG_2PIE = 0.5 * np.log(2.0 * np.pi * np.e)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


@dataclass
class Categorical:
    logits: np.ndarray  # [batch, n]

    def __post_init__(self):
        self.logits = np.atleast_2d(np.asarray(self.logits))
        if self.logits.shape[-1] < 1:
            raise ValueError("categorical needs at least one outcome")

    @property
    def n(self) -> int:
        return self.logits.shape[-1]

    def probs(self) -> np.ndarray:
        return np.exp(log_softmax(self.logits))

    def mode(self) -> np.ndarray:
        return np.argmax(self.logits, axis=-1)

    def _check_actions(self, actions) -> np.ndarray:
        actions = np.asarray(actions)
        if actions.shape != self.logits.shape[:-1]:
            raise ValueError(f"actions shape {actions.shape} vs logits {self.logits.shape}")
        if np.any(actions < 0) or np.any(actions >= self.n):
            raise ValueError(f"action out of range [0, {self.n})")
        return actions.astype(np.int64)

    def log_prob_entropy(self, actions):
        actions = self._check_actions(actions)
        logp_all = log_softmax(self.logits)
        p = np.exp(logp_all)
        logp = np.take_along_axis(logp_all, actions[..., None], axis=-1)[..., 0]
        entropy = -(p * logp_all).sum(axis=-1)
        return logp, entropy

    def backward(self, actions, grad_log_prob, grad_entropy):
        """dL/dlogits given dL/dlog_prob and dL/dentropy (per batch row)."""
        actions = self._check_actions(actions)
        logp_all = log_softmax(self.logits)
        p = np.exp(logp_all)
        entropy = -(p * logp_all).sum(axis=-1, keepdims=True)
        onehot = np.zeros_like(p)
        np.put_along_axis(onehot, actions[..., None], 1.0, axis=-1)
        g_lp = np.asarray(grad_log_prob, dtype=p.dtype)[..., None]
        g_h = np.asarray(grad_entropy, dtype=p.dtype)[..., None]
        return g_lp * (onehot - p) - g_h * p * (logp_all + entropy)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        """Inverse-CDF sampling, one uniform per row."""
        p = self.probs().astype(np.float64)
        cdf = np.cumsum(p, axis=-1)
        u = rng.random(p.shape[:-1]) * cdf[..., -1]
        idx = (u[..., None] >= cdf).sum(axis=-1)
        return np.minimum(idx, self.n - 1).astype(np.int64)


def cat_log_prob_entropy(logits, actions):
    return Categorical(logits).log_prob_entropy(actions)


def cat_sample(logits, rng):
    return Categorical(logits).sample(rng)


@dataclass
class DiagGaussian:
    mean: np.ndarray  # [batch, d]
    log_std: np.ndarray  # [d]

    def __post_init__(self):
        self.mean = np.atleast_2d(np.asarray(self.mean))
        self.log_std = np.asarray(self.log_std)
        if not np.all(np.isfinite(self.log_std)):
            raise ValueError("log_std must be finite")
        if self.log_std.shape != self.mean.shape[-1:]:
            raise ValueError(f"log_std shape {self.log_std.shape} vs mean {self.mean.shape}")

    def mode(self) -> np.ndarray:
        return self.mean

    def log_prob_entropy(self, actions):
        actions = np.asarray(actions, dtype=self.mean.dtype)
        if actions.shape != self.mean.shape:
            raise ValueError(f"actions shape {actions.shape} vs mean {self.mean.shape}")
        z = (actions - self.mean) * np.exp(-self.log_std)
        logp = (-0.5 * z * z - self.log_std - HALF_LOG_2PI).sum(axis=-1)
        entropy = np.full(self.mean.shape[0], (HALF_LOG_2PIE + self.log_std).sum(), dtype=logp.dtype)
        return logp, entropy

    def backward(self, actions, grad_log_prob, grad_entropy):
        """Return ``(dL/dmean, dL/dlog_std)``."""
        actions = np.asarray(actions, dtype=self.mean.dtype)
        inv_std = np.exp(-self.log_std)
        z = (actions - self.mean) * inv_std
        g_lp = np.asarray(grad_log_prob, dtype=self.mean.dtype)[:, None]
        g_h = np.asarray(grad_entropy, dtype=self.mean.dtype)
        grad_mean = g_lp * z * inv_std
        grad_log_std = (g_lp * (z * z - 1.0)).sum(axis=0) + g_h.sum()
        return grad_mean, grad_log_std

    def sample(self, rng: np.random.Generator, reparameterized: bool = False):
        noise = box_muller(rng, self.mean.shape)
        actions = self.mean + np.exp(self.log_std) * noise
        return actions, noise


def box_muller(rng: np.random.Generator, shape) -> np.ndarray:
    """Standard normals from pairs of uniforms on ``rng``."""
    n = int(np.prod(shape))
    m = (n + 1) // 2
    u1 = 1.0 - rng.random(m)  # (0, 1], keeps log finite
    u2 = rng.random(m)
    r = np.sqrt(-2.0 * np.log(u1))
    z = np.concatenate([r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)])
    return z[:n].reshape(shape)


def gauss_log_prob_entropy(mean, log_std, actions):
    return DiagGaussian(mean, log_std).log_prob_entropy(actions)


def gauss_sample(mean, log_std, rng, reparameterized: bool = False):
    return DiagGaussian(mean, log_std).sample(rng, reparameterized)


register("distribution", "categorical", {}, "softmax over logits; discrete actions")(Categorical)
register("distribution", "gaussian", {"log_std_init": 0.0}, "diagonal Gaussian, state-independent std")(
    DiagGaussian
)
