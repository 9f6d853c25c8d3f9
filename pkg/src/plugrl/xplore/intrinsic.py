"""Intrinsic reward modules.

All modules share one interface so an agent can hold any of them:
``compute(next_obs) -> rewards`` is called once per environment step and
``update(obs_batch)`` once per training iteration.
"""
from __future__ import annotations

import numpy as np

from ..approx import AdamState, Orthogonal, adam_step, backward, forward, init_mlp
from ..core import register


class RewardModule:
    def compute(self, next_obs) -> np.ndarray:
        raise NotImplementedError

    def update(self, obs_batch) -> float:
        return 0.0


@register("reward", "none", {}, "no intrinsic reward")
class NoReward(RewardModule):
    def __init__(self, obs_dim: int | None = None, seed: int = 0):
        pass

    def compute(self, next_obs):
        return np.zeros(len(next_obs))


class RunningMeanStd:
    """Parallel-merge running moments (Chan et al. update)."""

    def __init__(self, epsilon: float = 1e-4):
        self.mean = 0.0
        self.var = 1.0
        self.count = epsilon

    def update(self, x):
        x = np.asarray(x, dtype=np.float64).ravel()
        if x.size == 0:
            return
        b_mean, b_var, b_count = x.mean(), x.var(), x.size
        delta = b_mean - self.mean
        total = self.count + b_count
        self.mean = self.mean + delta * b_count / total
        m2 = self.var * self.count + b_var * b_count + delta**2 * self.count * b_count / total
        self.var = m2 / total
        self.count = total

    @property
    def std(self) -> float:
        return float(np.sqrt(self.var))


@register(
    "reward",
    "rnd",
    {"embed_dim": 64, "hidden": 64, "lr": 1e-3},
    "random network distillation: prediction error against a frozen random net",
)
class RndModule(RewardModule):
    def __init__(self, obs_dim: int, seed: int = 0, embed_dim: int = 64, hidden: int = 64, lr: float = 1e-3):
        sizes = [obs_dim, hidden, hidden, embed_dim]
        acts = ["relu", "relu", "identity"]
        self.target = init_mlp(sizes, acts, seed=seed, scheme=Orthogonal(np.sqrt(2.0)))
        self.predictor = init_mlp(sizes, acts, seed=seed + 1, scheme=Orthogonal(np.sqrt(2.0)))
        self.opt_state = AdamState.zeros(self.predictor)
        self.lr = lr
        self.embed_dim = embed_dim
        self.normalizer = RunningMeanStd()

    def raw_error(self, obs) -> np.ndarray:
        obs = np.asarray(obs, dtype=np.float32)
        pred, _ = forward(self.predictor, obs)
        targ, _ = forward(self.target, obs)
        return np.sum((pred - targ) ** 2, axis=1) / self.embed_dim

    def compute(self, next_obs):
        return self.raw_error(next_obs) / max(self.normalizer.std, 1e-8)

    def update(self, obs_batch) -> float:
        obs = np.asarray(obs_batch, dtype=np.float32)
        targ, _ = forward(self.target, obs)
        pred, cache = forward(self.predictor, obs)
        err = pred - targ
        per_sample = np.sum(err**2, axis=1) / self.embed_dim
        loss = float(per_sample.mean())
        grad_out = 2.0 * err / (len(obs) * self.embed_dim)
        grads, _ = backward(self.predictor, cache, grad_out)
        self.predictor, self.opt_state = adam_step(self.predictor, grads, self.opt_state, lr=self.lr)
        self.normalizer.update(per_sample)
        return loss


@register(
    "reward",
    "re3",
    {"embed_dim": 64, "k": 3, "archive_size": 10_000},
    "k-NN state entropy in a frozen random embedding",
)
class Re3Module(RewardModule):
    def __init__(self, obs_dim: int, seed: int = 0, embed_dim: int = 64, k: int = 3, archive_size: int = 10_000):
        if k < 1:
            raise ValueError("k must be >= 1")
        self.k = int(k)
        self.encoder = init_mlp(
            [obs_dim, embed_dim, embed_dim], ["tanh", "identity"], seed=seed, scheme=Orthogonal(1.0)
        )
        self.archive_size = int(archive_size)
        self._archive = np.zeros((self.archive_size, embed_dim))
        self._sqnorm = np.zeros(self.archive_size)
        self._count = 0
        self._next = 0

    @property
    def archive(self) -> np.ndarray:
        """Archived embeddings, oldest first."""
        if self._count < self.archive_size:
            return self._archive[: self._count]
        return np.roll(self._archive, -self._next, axis=0)

    def _push(self, y: np.ndarray):
        for row in y[-self.archive_size :]:
            self._archive[self._next] = row
            self._sqnorm[self._next] = row @ row
            self._next = (self._next + 1) % self.archive_size
        self._count = min(self._count + len(y), self.archive_size)

    def embed(self, obs) -> np.ndarray:
        return forward(self.encoder, np.asarray(obs, dtype=np.float32))[0]

    def _knn_rewards(self, y: np.ndarray) -> np.ndarray:
        n = self._count
        sq = (y**2).sum(1)[:, None] + self._sqnorm[None, :n] - 2.0 * y @ self._archive[:n].T
        dist = np.sqrt(np.maximum(sq, 0.0))
        knn = np.partition(dist, self.k - 1, axis=1)[:, : self.k]
        return np.log(knn + 1.0).mean(axis=1)

    def compute(self, next_obs):
        y = self.embed(next_obs).astype(np.float64)
        if self._count >= self.k:
            rewards = self._knn_rewards(y)
        else:
            rewards = np.zeros(len(y))
        self._push(y)
        return rewards


class RewardMixer:
    def __init__(self, beta0: float = 0.05, kappa: float = 1e-5):
        if beta0 < 0:
            raise ValueError("beta0 must be >= 0")
        if not 0.0 <= kappa < 1.0:
            raise ValueError("kappa must lie in [0, 1)")
        self.beta0 = float(beta0)
        self.kappa = float(kappa)

    def beta(self, t: int) -> float:
        if t < 0:
            raise ValueError("global step must be >= 0")
        return self.beta0 * (1.0 - self.kappa) ** t

    def mix(self, r_ext, r_int, t: int):
        return np.asarray(r_ext) + self.beta(t) * np.asarray(r_int)


def rnd_compute(m: RndModule, next_obs):
    return m.compute(next_obs)


def rnd_update(m: RndModule, obs_batch) -> float:
    return m.update(obs_batch)


def re3_compute(m: Re3Module, obs_batch):
    return m.compute(obs_batch)


def mix_rewards(mixer: RewardMixer, r_ext, r_int, t: int):
    return mixer.mix(r_ext, r_int, t)
