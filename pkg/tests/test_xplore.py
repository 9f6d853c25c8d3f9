import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plugrl.core import available, resolve, stream
from plugrl.xplore import (
    AugmentationError,
    Cutout,
    GaussianNoise,
    NoAugmentation,
    Re3Module,
    RewardMixer,
    RndModule,
    RandomShift,
    augment,
    mix_rewards,
    re3_compute,
    rnd_compute,
    rnd_update,
)


def test_gaussian_noise_zero_sigma():
    x = stream(0).standard_normal((4, 6)).astype(np.float32)
    assert np.array_equal(augment(GaussianNoise(0.0), x, stream(1)), x)


def test_gaussian_noise_std():
    x = np.zeros((1000, 100), np.float32)
    out = augment(GaussianNoise(0.3), x, stream(2))
    assert out.shape == x.shape and out.dtype == x.dtype
    assert abs((out - x).std() / 0.3 - 1) < 0.02


def test_random_shift_constant_image():
    x = np.full((5, 2, 8, 8), 3.5, np.float32)
    assert np.array_equal(augment(RandomShift(4), x, stream(3)), x)


def _reference_shift(img, pad, dy, dx):
    # scalar crop from an explicitly replicate-padded image
    c, h, w = img.shape
    padded = np.zeros((c, h + 2 * pad, w + 2 * pad), img.dtype)
    for ch in range(c):
        for i in range(h + 2 * pad):
            for j in range(w + 2 * pad):
                si = min(max(i - pad, 0), h - 1)
                sj = min(max(j - pad, 0), w - 1)
                padded[ch, i, j] = img[ch, si, sj]
    out = np.zeros_like(img)
    for ch in range(c):
        for i in range(h):
            for j in range(w):
                out[ch, i, j] = padded[ch, i + dy, j + dx]
    return out


def test_random_shift_matches_reference():
    b, c, h, w, pad = 6, 2, 7, 7, 3
    x = np.zeros((b, c, h, w), np.float32)
    for i in range(b):
        x[i, 0, i % h, (2 * i) % w] = 1.0
        x[i, 1, (3 * i) % h, 6 - i % w] = 1.0
    out = augment(RandomShift(pad), x, stream(4, "shift"))
    offsets = stream(4, "shift").integers(0, 2 * pad + 1, size=(b, 2))
    for i in range(b):
        assert np.array_equal(out[i], _reference_shift(x[i], pad, *offsets[i]))


def test_random_shift_flat_layout_and_errors():
    x = stream(5).random((3, 2 * 5 * 5)).astype(np.float32)
    out = augment(RandomShift(2), x, stream(6), layout=(2, 5, 5))
    assert out.shape == x.shape
    with pytest.raises(AugmentationError):
        augment(RandomShift(2), x, stream(6))
    with pytest.raises(AugmentationError):
        augment(Cutout(), x, stream(6), layout=(3, 5, 5))
    with pytest.raises(AugmentationError):
        RandomShift(-1)
    with pytest.raises(AugmentationError):
        GaussianNoise(-0.1)


def test_cutout_zeroes_box():
    x = np.ones((4, 1, 6, 6), np.float32)
    out = augment(Cutout(2, 3), x, stream(7))
    assert out.shape == x.shape
    assert np.all((out == 0).sum(axis=(1, 2, 3)) == 6)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(["none", "gaussian_noise", "random_shift", "cutout"]), st.integers(0, 1000))
def test_augmentations_preserve_shape_dtype(name, seed):
    op = resolve("augmentation", name).factory()
    x = stream(seed).random((3, 2, 6, 6)).astype(np.float32)
    out = op(x, stream(seed, "aug"))
    assert out.shape == x.shape and out.dtype == x.dtype
    again = op(x, stream(seed, "aug"))
    assert np.array_equal(out, again)


def test_rnd_identical_nets_zero_reward():
    m = RndModule(6, seed=0, embed_dim=8, hidden=16)
    m.predictor = m.target.copy()
    obs = stream(0).random((5, 6))
    assert np.all(m.raw_error(obs) == 0)
    assert np.all(rnd_compute(m, obs) == 0)


def test_rnd_nonnegative_and_pure_compute():
    m = RndModule(6, seed=1)
    obs = stream(1).random((10, 6))
    before = m.predictor.copy()
    r = rnd_compute(m, obs)
    assert np.all(r >= 0)
    assert m.predictor.equals(before)


def test_rnd_converges_on_fixed_observation():
    m = RndModule(6, seed=2)
    obs = stream(2).random((1, 6))
    initial = m.raw_error(obs)[0]
    for _ in range(200):
        rnd_update(m, obs)
    assert m.raw_error(obs)[0] < 0.1 * initial


def test_rnd_update_determinism_frozen_target_and_counts():
    a, b = RndModule(4, seed=3), RndModule(4, seed=3)
    obs = stream(3).random((16, 4))
    target = a.target.copy()
    counts = []
    losses = []
    for _ in range(60):
        la, lb = rnd_update(a, obs), rnd_update(b, obs)
        assert la == lb
        losses.append(la)
        counts.append(a.normalizer.count)
    assert a.target.equals(target)
    assert np.all(np.diff(counts) > 0)
    smooth = np.convolve(losses, np.ones(10) / 10, mode="valid")
    assert np.all(np.diff(smooth[-20:]) < 0)


def _knn_oracle(batch, archive, k):
    out = []
    for y in batch:
        d = sorted(math.sqrt(sum((a - b) ** 2 for a, b in zip(y, z))) for z in archive)
        out.append(sum(math.log(x + 1) for x in d[:k]) / k)
    return np.array(out)


def test_re3_matches_brute_force():
    m = Re3Module(5, seed=4, embed_dim=16, k=3)
    rng = stream(4, "re3")
    first = rng.random((32, 5))
    assert np.all(re3_compute(m, first) == 0)
    archive = m.archive.copy()
    assert archive.shape == (32, 16)
    batch = rng.random((8, 5))
    emb = m.embed(batch).astype(np.float64)
    r = re3_compute(m, batch)
    assert np.max(np.abs(r - _knn_oracle(emb, archive, 3))) < 1e-6
    assert len(m.archive) == 40


def test_re3_zero_distance_and_monotone():
    m = Re3Module(3, seed=5, k=3)
    dup = np.tile([[0.2, 0.4, 0.6]], (3, 1))
    m.compute(dup)
    r = m.compute(np.array([[0.2, 0.4, 0.6], [5.0, -5.0, 5.0]]))
    assert r[0] == pytest.approx(0.0, abs=1e-6)
    assert r[1] > r[0]


def test_re3_archive_bound_fifo():
    m = Re3Module(2, seed=6, k=1, archive_size=5)
    for i in range(4):
        m.compute(np.full((3, 2), float(i)))
    assert len(m.archive) == 5
    assert np.allclose(m.archive, m.embed(np.array([[2.0, 2], [2, 2], [3, 3], [3, 3], [3, 3]])), atol=1e-6)
    with pytest.raises(ValueError):
        Re3Module(2, k=0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_re3_permutation_equivariant(seed):
    rng = stream(seed, "perm")
    archive_obs, batch = rng.random((20, 4)), rng.random((6, 4))
    perm = rng.permutation(6)
    m1, m2 = Re3Module(4, seed=1, embed_dim=8), Re3Module(4, seed=1, embed_dim=8)
    m1.compute(archive_obs)
    m2.compute(archive_obs)
    assert np.allclose(m1.compute(batch)[perm], m2.compute(batch[perm]), atol=1e-12)


def test_mixer():
    r_ext, r_int = np.array([1.0, 0.0]), np.array([3.0, 2.0])
    assert np.array_equal(mix_rewards(RewardMixer(0.0, 1e-5), r_ext, r_int, 50), r_ext)
    m = RewardMixer(0.05, 0.0)
    assert m.beta(0) == m.beta(10**6) == 0.05
    beta = RewardMixer(0.05, 1e-5).beta(10**5)
    assert abs(beta - 0.05 * (1 - 1e-5) ** 10**5) < 1e-12
    assert abs(beta - 0.018394) < 1e-4
    with pytest.raises(ValueError):
        RewardMixer(0.05, 1.0)
    with pytest.raises(ValueError):
        m.beta(-1)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 1), st.floats(0, 0.999), st.integers(0, 10**6), st.integers(0, 10**6))
def test_mixer_beta_nonincreasing(beta0, kappa, t1, t2):
    m = RewardMixer(beta0, kappa)
    lo, hi = sorted((t1, t2))
    assert 0 <= m.beta(hi) <= m.beta(lo)


def test_reward_modules_share_interface():
    obs = stream(8).random((4, 6))
    for name in available("reward"):
        mod = resolve("reward", name).factory(obs_dim=6, seed=0)
        r = mod.compute(obs)
        assert r.shape == (4,)
        assert isinstance(mod.update(obs), float)


def test_no_augmentation_identity():
    x = np.arange(6.0).reshape(2, 3)
    assert np.array_equal(NoAugmentation()(x, stream(0)), x)
