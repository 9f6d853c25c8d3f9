"""Shape-preserving observation augmentations.

Spatial ops (``RandomShift``, ``Cutout``) need a ``(C, H, W)`` layout: either
the batch is already ``[B, C, H, W]`` or a ``layout`` is passed for flat
``[B, C*H*W]`` observations.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import register


class AugmentationError(ValueError):
    pass


def _as_spatial(obs: np.ndarray, layout):
    if obs.ndim == 4:
        return obs, obs.shape
    if obs.ndim == 2 and layout is not None:
        c, h, w = layout
        if c * h * w != obs.shape[1]:
            raise AugmentationError(f"layout {layout} does not fit observation size {obs.shape[1]}")
        return obs.reshape(obs.shape[0], c, h, w), obs.shape
    raise AugmentationError(
        f"spatial augmentation needs [B, C, H, W] observations or a (C, H, W) layout, got {obs.shape}"
    )


class Augmentation:
    def __call__(self, obs, rng: np.random.Generator, layout=None) -> np.ndarray:
        return self.transform(obs, rng, layout)


@register("augmentation", "none", {}, "identity")
@dataclass(frozen=True)
class NoAugmentation(Augmentation):
    def transform(self, obs, rng=None, layout=None):
        return np.asarray(obs)


@register("augmentation", "gaussian_noise", {"sigma": 0.1}, "additive Gaussian noise")
@dataclass(frozen=True)
class GaussianNoise(Augmentation):
    sigma: float = 0.1

    def __post_init__(self):
        if self.sigma < 0:
            raise AugmentationError("sigma must be >= 0")

    def transform(self, obs, rng, layout=None):
        obs = np.asarray(obs)
        noise = rng.standard_normal(obs.shape)
        return (obs + self.sigma * noise).astype(obs.dtype, copy=False)


@register("augmentation", "random_shift", {"pad": 4}, "replicate-pad then random crop")
@dataclass(frozen=True)
class RandomShift(Augmentation):
    pad: int = 4

    def __post_init__(self):
        if self.pad < 0:
            raise AugmentationError("pad must be >= 0")

    def transform(self, obs, rng, layout=None):
        obs = np.asarray(obs)
        x, shape = _as_spatial(obs, layout)
        b, _, h, w = x.shape
        offsets = rng.integers(0, 2 * self.pad + 1, size=(b, 2))
        # crop origin in padded coords minus pad, clamped = replicate padding
        rows = np.clip(np.arange(h)[None, :] + offsets[:, :1] - self.pad, 0, h - 1)
        cols = np.clip(np.arange(w)[None, :] + offsets[:, 1:] - self.pad, 0, w - 1)
        out = x[np.arange(b)[:, None, None, None], np.arange(x.shape[1])[None, :, None, None],
                rows[:, None, :, None], cols[:, None, None, :]]
        return out.reshape(shape)


@register("augmentation", "cutout", {"box_h": 2, "box_w": 2}, "zero a random rectangle")
@dataclass(frozen=True)
class Cutout(Augmentation):
    box_h: int = 2
    box_w: int = 2

    def transform(self, obs, rng, layout=None):
        obs = np.asarray(obs)
        x, shape = _as_spatial(obs, layout)
        b, _, h, w = x.shape
        if self.box_h > h or self.box_w > w:
            raise AugmentationError(f"cutout box {self.box_h}x{self.box_w} larger than {h}x{w}")
        top = rng.integers(0, h - self.box_h + 1, size=b)
        left = rng.integers(0, w - self.box_w + 1, size=b)
        out = x.copy()
        for i in range(b):
            out[i, :, top[i] : top[i] + self.box_h, left[i] : left[i] + self.box_w] = 0
        return out.reshape(shape)


def augment(op: Augmentation, obs_batch, rng, layout=None) -> np.ndarray:
    return op.transform(obs_batch, rng, layout)
