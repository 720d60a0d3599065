"""Correlation, bootstrap confidence intervals and paired permutation tests."""

from __future__ import annotations

import numpy as np

from .errors import DegenerateInput, LengthMismatch, TooFewValues


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise LengthMismatch(f"pearson needs two equal-length 1D samples, got {x.shape} and {y.shape}")
    if x.size < 2:
        raise DegenerateInput("pearson needs at least two pairs")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0 or syy == 0:
        raise DegenerateInput("zero variance in pearson input")
    r = float(dx @ dy) / np.sqrt(sxx * syy)
    return float(np.clip(r, -1.0, 1.0))


def bootstrap_ci(values, n_resamples: int = 10000, alpha: float = 0.05, seed: int = 0) -> tuple[float, float]:
    """Percentile bootstrap interval for the mean."""
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        raise TooFewValues("bootstrap needs at least two values")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, v.size, size=(n_resamples, v.size))
    # Shifting by a sample value keeps constant inputs exact.
    ref = v[0]
    means = ref + (v - ref)[idx].mean(axis=1)
    lo, hi = np.quantile(means, [alpha / 2, 1 - alpha / 2])
    return float(lo), float(hi)


def permutation_test(paired_a, paired_b, n_permutations: int = 10000, seed: int = 0) -> float:
    """Two-sided paired sign-flip test on the mean difference.

    ``p = (1 + #{|perm stat| >= |observed|}) / (1 + n_permutations)``.
    """
    a = np.asarray(paired_a, dtype=np.float64)
    b = np.asarray(paired_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise LengthMismatch(f"paired samples differ: {a.shape} vs {b.shape}")
    if a.size < 2:
        raise TooFewValues("permutation test needs at least two pairs")
    diff = a - b
    observed = abs(diff.mean())
    rng = np.random.default_rng(seed)
    signs = rng.choice(np.array([-1.0, 1.0]), size=(n_permutations, diff.size))
    perm = np.abs((signs * diff).mean(axis=1))
    # tolerance absorbs summation-order rounding so exact ties count as ties
    tol = 1e-12 * max(1.0, observed)
    hits = int(np.count_nonzero(perm >= observed - tol))
    return (1 + hits) / (1 + n_permutations)


def mean_std(values) -> tuple[float, float]:
    """Mean and population standard deviation (zero for a single value)."""
    v = np.asarray(values, dtype=np.float64)
    return float(v.mean()), float(v.std())
