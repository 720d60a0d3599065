"""Synthetic breast-MRI phantoms with exact ground truth.

Each phantom is an axial slab: a chest wall along the posterior side of the
height axis and two half-ellipsoid breasts protruding anteriorly, centred at
25 % and 75 % of the width. FGT is a thresholded, smoothed random field inside
the breasts whose threshold is bisected to hit the requested density.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import InfeasibleSpec
from .volumes import BinaryMask, Case, Volume

FAT_INTENSITY = 100.0
FGT_INTENSITY = 140.0
CHEST_WALL_INTENSITY = 60.0
DEFAULT_SPACING = (3.0, 1.0, 1.0)


@dataclass(frozen=True)
class PhantomSpec:
    seed: int = 0
    shape: tuple[int, int, int] = (8, 64, 128)
    target_density: float = 0.3
    enhancement_factor: float = 1.5
    noise_sigma: float = 0.0
    bias_field_strength: float = 0.0
    spacing: tuple[float, float, float] = DEFAULT_SPACING
    blob_sigma: float = 2.0

    def __post_init__(self):
        if not 0.0 < self.target_density < 1.0:
            raise InfeasibleSpec(f"target_density must lie in (0, 1), got {self.target_density}")
        if len(self.shape) != 3 or min(self.shape) < 8:
            raise InfeasibleSpec(f"every shape component must be >= 8, got {self.shape}")
        if self.enhancement_factor <= 0:
            raise InfeasibleSpec("enhancement_factor must be positive")
        if self.noise_sigma < 0 or self.bias_field_strength < 0:
            raise InfeasibleSpec("noise_sigma and bias_field_strength must be non-negative")


def _breast_geometry(shape):
    d, h, w = shape
    zz, yy, xx = np.meshgrid(np.arange(d), np.arange(h), np.arange(w), indexing="ij")
    wall = int(round(0.75 * h))
    chest = yy >= wall
    rz = max(d / 2.0, 1.0)
    ry = 0.65 * h
    rx = 0.2 * w
    breast = np.zeros(shape, dtype=bool)
    for cx in (0.25 * (w - 1), 0.75 * (w - 1)):
        inside = ((zz - (d - 1) / 2) / rz) ** 2 + ((yy - wall) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
        breast |= inside & (yy < wall)
    return breast, chest


def _fgt_from_field(field: np.ndarray, breast: np.ndarray, target: float) -> np.ndarray:
    values = field[breast]
    lo, hi = float(values.min()), float(values.max())
    n = values.size
    # Density is non-increasing in the threshold: bisect on it.
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if np.count_nonzero(values > mid) / n > target:
            lo = mid
        else:
            hi = mid
    thr = lo if abs(np.count_nonzero(values > lo) / n - target) < abs(np.count_nonzero(values > hi) / n - target) else hi
    return breast & (field > thr)


def _bias_field(shape, strength: float, rng: np.random.Generator) -> np.ndarray:
    grids = np.meshgrid(*[np.linspace(-1, 1, n) for n in shape], indexing="ij")
    coeffs = rng.uniform(-1, 1, size=6)
    z, y, x = grids
    poly = coeffs[0] * z + coeffs[1] * y + coeffs[2] * x + coeffs[3] * y * x + coeffs[4] * y**2 + coeffs[5] * x**2
    poly /= max(np.abs(poly).max(), 1e-12)
    return 1.0 + strength * poly


def generate_phantom(spec: PhantomSpec, case_id: str | None = None) -> Case:
    rng = np.random.default_rng(spec.seed)
    breast, chest = _breast_geometry(spec.shape)
    n_breast = int(breast.sum())
    if n_breast == 0 or round(spec.target_density * n_breast) < 1 or round(spec.target_density * n_breast) >= n_breast:
        raise InfeasibleSpec(f"density {spec.target_density} not attainable with {n_breast} breast voxels")

    # Smooth more in-plane than across slices to mimic anisotropic tissue structure.
    sigma = (spec.blob_sigma / 3.0, spec.blob_sigma, spec.blob_sigma)
    field = ndimage.gaussian_filter(rng.standard_normal(spec.shape), sigma=sigma, mode="reflect")
    fgt = _fgt_from_field(field, breast, spec.target_density)
    achieved = fgt.sum() / n_breast
    if abs(achieved - spec.target_density) > 0.2 * spec.target_density:
        raise InfeasibleSpec(f"achieved density {achieved:.3f} misses target {spec.target_density}")

    pre = np.zeros(spec.shape, dtype=np.float64)
    pre[chest] = CHEST_WALL_INTENSITY
    pre[breast] = FAT_INTENSITY
    pre[fgt] = FGT_INTENSITY
    post = pre.copy()
    post[fgt] = pre[fgt] * spec.enhancement_factor

    if spec.bias_field_strength > 0:
        bias = _bias_field(spec.shape, spec.bias_field_strength, rng)
        pre *= bias
        post *= bias
    if spec.noise_sigma > 0:
        pre += rng.normal(0.0, spec.noise_sigma, spec.shape)
        post += rng.normal(0.0, spec.noise_sigma, spec.shape)

    cid = case_id or f"phantom-{spec.seed}"
    return Case(
        case_id=cid,
        pre=Volume(pre, spec.spacing, f"{cid}-pre"),
        post=Volume(post, spec.spacing, f"{cid}-post"),
        breast_mask=BinaryMask(breast.astype(np.uint8), spec.spacing, f"{cid}-breast"),
        fgt_mask=BinaryMask(fgt.astype(np.uint8), spec.spacing, f"{cid}-fgt"),
    )


def cohort_specs(n: int, seed: int, density_range=(0.1, 0.5), *, shape=(8, 64, 128),
                 noise_sigma: float = 5.0, bias_field_strength: float = 0.1,
                 enhancement_range=(1.3, 2.0)) -> list[PhantomSpec]:
    if n < 1:
        raise ValueError("cohort size must be >= 1")
    lo, hi = density_range
    if not 0 < lo < hi < 1:
        raise InfeasibleSpec(f"density_range must satisfy 0 < lo < hi < 1, got {density_range}")
    densities = np.linspace(lo, hi, n) if n > 1 else np.array([(lo + hi) / 2])
    ss = np.random.SeedSequence(seed)
    specs = []
    for child, density in zip(ss.spawn(n), densities):
        case_seed = int(child.generate_state(1)[0])
        enh = float(np.random.default_rng(case_seed).uniform(*enhancement_range))
        specs.append(PhantomSpec(
            seed=case_seed, shape=tuple(shape), target_density=float(round(density, 10)),
            enhancement_factor=enh, noise_sigma=noise_sigma, bias_field_strength=bias_field_strength,
        ))
    return specs


def generate_cohort(n: int, seed: int, density_range=(0.1, 0.5), **kwargs) -> list[Case]:
    """``n`` phantoms with target densities evenly spaced over ``density_range``.

    Per-case seeds are spawned from ``seed``; each case also draws its own
    enhancement factor so BPE varies across the cohort.
    """
    specs = cohort_specs(n, seed, density_range, **kwargs)
    return [generate_phantom(s, case_id=f"phantom{seed}-{i:03d}") for i, s in enumerate(specs)]
