import numpy as np
import pytest
from scipy import stats

from fgtseg.augment import AugmentConfig, augment, flip, pad_to, sample_window


def _sample(seed=0, shape=(2, 8, 32, 32)):
    rng = np.random.default_rng(seed)
    image = rng.normal(size=shape).astype(np.float32)
    mask = (rng.random(shape[1:]) > 0.7).astype(np.uint8)
    return image, mask


def test_disabled_is_identity():
    image, mask = _sample()
    out_i, out_m = augment(image, mask, seed=3, cfg=AugmentConfig.disabled())
    assert np.array_equal(out_i, image) and np.array_equal(out_m, mask)


def test_flip_involution():
    image, mask = _sample()
    i1, m1 = flip(image, mask, (0, 1, 2))
    i2, m2 = flip(i1, m1, (0, 1, 2))
    assert np.array_equal(i2, image) and np.array_equal(m2, mask)
    assert not np.array_equal(i1, image)


def test_seeded_determinism():
    image, mask = _sample()
    a = augment(image, mask, seed=42)
    b = augment(image, mask, seed=42)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_invariants_over_draws():
    image, mask = _sample(1)
    all_on = AugmentConfig(flip=1, affine=1, ghosting=1, noise=1, blur=1, bias_field=1, gamma=1)
    for seed in range(100):
        cfg = all_on if seed % 2 else AugmentConfig()
        out_i, out_m = augment(image, mask, seed=seed, cfg=cfg)
        assert out_i.shape == image.shape and out_m.shape == mask.shape
        assert set(np.unique(out_m)) <= {0, 1}
        assert np.all(np.isfinite(out_i))


def test_affine_keeps_depth_slices_intact():
    image, mask = _sample(2)
    cfg = AugmentConfig.disabled()
    cfg.affine = 1.0
    # in-plane only: a slice with no foreground stays empty
    mask = mask.copy()
    mask[3] = 0
    _, out_m = augment(image, mask, seed=0, cfg=cfg)
    assert out_m[3].sum() == 0


def test_window_exact_size_returns_crop():
    image, mask = _sample(shape=(2, 8, 16, 16))
    win_i, win_m, start = sample_window(image, mask, (8, 16, 16), seed=0)
    assert start == (0, 0, 0)
    assert np.array_equal(win_i, image) and np.array_equal(win_m, mask)


def test_window_smaller_crop_is_padded():
    image, mask = _sample(shape=(2, 4, 10, 16))
    win_i, win_m, _ = sample_window(image, mask, (8, 16, 16), seed=0)
    assert win_i.shape == (2, 8, 16, 16)
    assert np.array_equal(win_i[:, 2:6, 3:13, :], image)
    assert win_i[:, :2].sum() == 0 and win_m.sum() == mask.sum()


def test_pad_to_symmetric():
    arr, pads = pad_to(np.ones((3, 5, 5)), (4, 8, 5))
    assert arr.shape == (4, 8, 5)
    assert pads == [(0, 1), (1, 2), (0, 0)]


def test_window_offsets_uniform():
    image, mask = _sample(shape=(1, 1, 1, 8))
    counts = np.zeros(5, dtype=int)
    for seed in range(1000):
        _, _, start = sample_window(image, mask, (1, 1, 4), seed=seed)
        counts[start[2]] += 1
    assert counts.min() > 0
    assert stats.chisquare(counts).pvalue > 0.001
