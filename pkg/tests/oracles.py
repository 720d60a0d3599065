"""Slow, independent reference implementations used to check the library."""

from __future__ import annotations

import itertools
import math

import numpy as np

_FACES = [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)]


def dice_bruteforce(a, b) -> float:
    inter = na = nb = 0
    for va, vb in zip(np.asarray(a).ravel(), np.asarray(b).ravel()):
        na += bool(va)
        nb += bool(vb)
        inter += bool(va) and bool(vb)
    if na + nb == 0:
        return 1.0
    return 2.0 * inter / (na + nb)


def surface_voxels(mask) -> list[tuple[int, int, int]]:
    """Foreground voxels with a face neighbour that is background or outside."""
    mask = np.asarray(mask).astype(bool)
    shape = mask.shape
    out = []
    for idx in zip(*np.nonzero(mask)):
        for off in _FACES:
            n = tuple(i + o for i, o in zip(idx, off))
            if not all(0 <= c < s for c, s in zip(n, shape)) or not mask[n]:
                out.append(tuple(int(i) for i in idx))
                break
    return out


def assd_bruteforce(a, b, spacing) -> float:
    sa = np.array(surface_voxels(a), dtype=np.float64) * np.asarray(spacing, dtype=np.float64)
    sb = np.array(surface_voxels(b), dtype=np.float64) * np.asarray(spacing, dtype=np.float64)
    pair = np.sqrt(((sa[:, None, :] - sb[None, :, :]) ** 2).sum(axis=-1))
    return 0.5 * (pair.min(axis=1).mean() + pair.min(axis=0).mean())


def dice_ce_reference(logits: np.ndarray, target: np.ndarray, smooth: float = 1e-5) -> float:
    """(1 - soft foreground Dice) + mean cross-entropy, from the formulas, in float64."""
    logits = np.asarray(logits, dtype=np.float64)
    c = logits.shape[0]
    flat = logits.reshape(c, -1)
    t = np.asarray(target).ravel()
    ce_terms, fg = [], []
    for v in range(flat.shape[1]):
        z = flat[:, v]
        m = z.max()
        lse = m + math.log(sum(math.exp(x - m) for x in z))
        ce_terms.append(lse - z[t[v]])
        fg.append(math.exp(z[1] - lse))
    fg = np.array(fg)
    tgt = (t == 1).astype(np.float64)
    dice = (2 * (fg * tgt).sum() + smooth) / (fg.sum() + tgt.sum() + smooth)
    return (1 - dice) + float(np.mean(ce_terms))


def vote_counting(masks) -> np.ndarray:
    masks = [np.asarray(m) for m in masks]
    out = np.zeros(masks[0].shape, dtype=np.uint8)
    for idx in itertools.product(*[range(n) for n in out.shape]):
        votes = sum(int(m[idx] != 0) for m in masks)
        out[idx] = 1 if votes > len(masks) / 2 else 0
    return out


def argmax_loop(probs) -> np.ndarray:
    probs = np.asarray(probs)
    out = np.zeros(probs.shape[1:], dtype=np.uint8)
    for idx in itertools.product(*[range(n) for n in out.shape]):
        best, best_c = -np.inf, 0
        for c in range(probs.shape[0]):
            if probs[(c,) + idx] > best:
                best, best_c = probs[(c,) + idx], c
        out[idx] = best_c
    return out


def random_mask_pair(rng: np.random.Generator, shape=(6, 6, 6)):
    """Two random nonempty masks with a random fill density each."""
    while True:
        pa, pb = rng.uniform(0.05, 0.6, size=2)
        a = rng.random(shape) < pa
        b = rng.random(shape) < pb
        if a.any() and b.any():
            return a, b
