"""Training-time augmentation and random window sampling.

Every transform draws from a single ``numpy.random.Generator`` seeded per
sample, so results do not depend on worker count or call order. Images are
``(C, D, H, W)`` float arrays, masks ``(D, H, W)`` uint8 arrays.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage


@dataclass
class AugmentConfig:
    flip: float = 0.5
    affine: float = 0.3
    ghosting: float = 0.3
    noise: float = 0.3
    blur: float = 0.3
    bias_field: float = 0.3
    gamma: float = 0.3
    max_rotation_deg: float = 10.0
    scale_range: tuple[float, float] = (0.9, 1.1)
    noise_std: float = 0.1
    max_blur_sigma: float = 1.0
    bias_coefficient: float = 0.3
    log_gamma: float = 0.3

    @classmethod
    def disabled(cls) -> "AugmentConfig":
        return cls(flip=0, affine=0, ghosting=0, noise=0, blur=0, bias_field=0, gamma=0)

    def to_dict(self) -> dict:
        return asdict(self)


def flip(image: np.ndarray, mask: np.ndarray, axes) -> tuple[np.ndarray, np.ndarray]:
    """Flip along spatial ``axes`` (0=depth, 1=height, 2=width)."""
    axes = tuple(axes)
    if not axes:
        return image, mask
    return np.flip(image, axis=tuple(a + 1 for a in axes)).copy(), np.flip(mask, axis=axes).copy()


def random_affine(image, mask, rng, max_rotation_deg=10.0, scale_range=(0.9, 1.1)):
    """In-plane rotation and isotropic in-plane scaling about the volume centre.

    Depth is left untouched because slices are thick relative to the in-plane
    resolution. The image is resampled linearly, the mask by nearest neighbour.
    """
    angle = np.deg2rad(rng.uniform(-max_rotation_deg, max_rotation_deg))
    scale = rng.uniform(*scale_range)
    c, s = np.cos(angle), np.sin(angle)
    matrix = np.array([[1.0, 0.0, 0.0], [0.0, c / scale, -s / scale], [0.0, s / scale, c / scale]])
    centre = (np.array(mask.shape) - 1) / 2.0
    offset = centre - matrix @ centre
    out = np.empty_like(image)
    for ch in range(image.shape[0]):
        out[ch] = ndimage.affine_transform(image[ch], matrix, offset=offset, order=1, mode="constant", cval=0.0)
    warped = ndimage.affine_transform(mask, matrix, offset=offset, order=0, mode="constant", cval=0)
    return out, warped.astype(np.uint8)


def ghosting(image, rng, intensity=(0.3, 0.7), num_ghosts=(2, 6)):
    """k-space ghosting: attenuate every n-th phase-encoding line except the centre."""
    out = np.empty_like(image)
    axis = int(rng.integers(1, 3))
    n = int(rng.integers(num_ghosts[0], num_ghosts[1] + 1))
    strength = rng.uniform(*intensity)
    for ch in range(image.shape[0]):
        k = np.fft.fftshift(np.fft.fftn(image[ch]))
        size = k.shape[axis]
        idx = [slice(None)] * 3
        lines = np.zeros(size, dtype=bool)
        lines[::n] = True
        lines[size // 2] = False
        idx[axis] = lines
        k[tuple(idx)] *= 1 - strength
        out[ch] = np.real(np.fft.ifftn(np.fft.ifftshift(k)))
    return out.astype(image.dtype)


def gaussian_noise(image, rng, std=0.1):
    return (image + rng.normal(0.0, rng.uniform(0, std), image.shape)).astype(image.dtype)


def blur(image, rng, max_sigma=1.0):
    sig = rng.uniform(0, max_sigma, size=3)
    sig[0] *= 1 / 3  # anisotropic voxels: blur less across slices
    return np.stack([ndimage.gaussian_filter(ch, sig) for ch in image]).astype(image.dtype)


def bias_field(image, rng, coefficient=0.3):
    """Multiplicative smooth field ``exp(p(z, y, x))`` with a random quadratic polynomial."""
    shape = image.shape[1:]
    z, y, x = np.meshgrid(*[np.linspace(-1, 1, n) for n in shape], indexing="ij")
    terms = [z, y, x, y * x, y**2, x**2]
    coeffs = rng.uniform(-coefficient, coefficient, size=len(terms))
    field = np.exp(sum(c * t for c, t in zip(coeffs, terms)))
    return (image * field[None]).astype(image.dtype)


def gamma(image, rng, log_gamma=0.3):
    """Gamma on each channel after min-max rescaling, then mapped back to the original range."""
    g = np.exp(rng.uniform(-log_gamma, log_gamma))
    out = np.empty_like(image)
    for ch in range(image.shape[0]):
        lo, hi = image[ch].min(), image[ch].max()
        if hi == lo:
            out[ch] = image[ch]
            continue
        unit = (image[ch] - lo) / (hi - lo)
        out[ch] = unit**g * (hi - lo) + lo
    return out


def augment(image: np.ndarray, mask: np.ndarray, seed: int, cfg: AugmentConfig | None = None):
    """Apply each transform with its own probability; spatial ones touch image and mask alike."""
    cfg = cfg or AugmentConfig()
    rng = np.random.default_rng(seed)
    image = np.asarray(image, dtype=np.float32)
    mask = np.asarray(mask, dtype=np.uint8)

    axes = [a for a in range(3) if rng.random() < cfg.flip]
    image, mask = flip(image, mask, axes)
    if rng.random() < cfg.affine:
        image, mask = random_affine(image, mask, rng, cfg.max_rotation_deg, cfg.scale_range)
    if rng.random() < cfg.ghosting:
        image = ghosting(image, rng)
    if rng.random() < cfg.noise:
        image = gaussian_noise(image, rng, cfg.noise_std)
    if rng.random() < cfg.blur:
        image = blur(image, rng, cfg.max_blur_sigma)
    if rng.random() < cfg.bias_field:
        image = bias_field(image, rng, cfg.bias_coefficient)
    if rng.random() < cfg.gamma:
        image = gamma(image, rng, cfg.log_gamma)
    return image, mask


def pad_to(arr: np.ndarray, shape, spatial_axes_start: int = 0) -> tuple[np.ndarray, list[tuple[int, int]]]:
    """Zero-pad symmetrically so the spatial axes are at least ``shape``.

    Returns the padded array and the ``(before, after)`` pad per spatial axis.
    """
    pads = []
    for n, w in zip(arr.shape[spatial_axes_start:], shape):
        total = max(w - n, 0)
        pads.append((total // 2, total - total // 2))
    if not any(a or b for a, b in pads):
        return arr, pads
    return np.pad(arr, [(0, 0)] * spatial_axes_start + pads), pads


def window_offsets(spatial_shape, window_shape) -> list[int]:
    """Number of valid start positions per axis for a window inside a (padded) crop."""
    return [max(n, w) - w + 1 for n, w in zip(spatial_shape, window_shape)]


def sample_window(image: np.ndarray, mask: np.ndarray | None, window_shape, seed: int):
    """Uniformly random ``window_shape`` sub-crop; smaller crops are zero-padded first.

    Returns ``(image_window, mask_window, start)`` where ``start`` indexes the
    padded crop.
    """
    rng = np.random.default_rng(seed)
    image, _ = pad_to(image, window_shape, spatial_axes_start=1)
    if mask is not None:
        mask, _ = pad_to(mask, window_shape)
    start = tuple(int(rng.integers(0, k)) for k in window_offsets(image.shape[1:], window_shape))
    sl = tuple(slice(s, s + w) for s, w in zip(start, window_shape))
    win_mask = mask[sl] if mask is not None else None
    return image[(slice(None),) + sl], win_mask, start
