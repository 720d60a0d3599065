"""Segmentation overlap/surface metrics and the clinical quantities derived from FGT masks."""

from __future__ import annotations

import warnings

import numpy as np
from scipy import ndimage

from .errors import EmptyMask, NonPositiveBaseline, ShapeMismatch
from .volumes import BinaryMask, Volume

_FACE_NEIGHBOURS = ndimage.generate_binary_structure(3, 1)


def _arr(m) -> np.ndarray:
    return (m.data if isinstance(m, (BinaryMask, Volume)) else np.asarray(m))


def dice(a, b) -> float:
    """2|A n B| / (|A| + |B|); two empty masks score 1.0."""
    a, b = _arr(a) != 0, _arr(b) != 0
    if a.shape != b.shape:
        raise ShapeMismatch(f"{a.shape} vs {b.shape}")
    total = int(a.sum()) + int(b.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.logical_and(a, b).sum()) / total


def surface(mask: np.ndarray) -> np.ndarray:
    """Foreground voxels with at least one face neighbour in background or outside the volume."""
    mask = np.asarray(mask) != 0
    return mask & ~ndimage.binary_erosion(mask, structure=_FACE_NEIGHBOURS, border_value=0)


def directed_surface_distances(a: np.ndarray, b: np.ndarray, spacing) -> np.ndarray:
    """Distance in mm from each surface voxel of ``a`` to the nearest surface voxel of ``b``."""
    sa, sb = surface(a), surface(b)
    dt = ndimage.distance_transform_edt(~sb, sampling=spacing)
    return dt[sa]


def assd(a, b, spacing=None) -> float:
    """Average symmetric surface distance in mm.

    The mean of the two directed average surface distances (a to b and b to a),
    not the mean of the pooled distances.
    """
    if spacing is None:
        spacing = a.spacing if isinstance(a, BinaryMask) else (1.0, 1.0, 1.0)
    a, b = _arr(a) != 0, _arr(b) != 0
    if a.shape != b.shape:
        raise ShapeMismatch(f"{a.shape} vs {b.shape}")
    if not a.any() or not b.any():
        raise EmptyMask("ASSD is undefined when either mask is empty")
    spacing = tuple(float(s) for s in spacing)
    d_ab = directed_surface_distances(a, b, spacing).mean()
    d_ba = directed_surface_distances(b, a, spacing).mean()
    return float(0.5 * (d_ab + d_ba))


def breast_density(fgt, breast) -> float:
    """Fraction of breast voxels labelled FGT. FGT outside the breast is clipped with a warning."""
    fgt, breast = _arr(fgt) != 0, _arr(breast) != 0
    if fgt.shape != breast.shape:
        raise ShapeMismatch(f"{fgt.shape} vs {breast.shape}")
    n_breast = int(breast.sum())
    if n_breast == 0:
        raise EmptyMask("breast mask is empty")
    outside = fgt & ~breast
    if outside.any():
        warnings.warn(f"{int(outside.sum())} FGT voxels lie outside the breast mask and were ignored", stacklevel=2)
        fgt = fgt & breast
    return int(fgt.sum()) / n_breast


def bpe(pre, post, fgt) -> float:
    """Background parenchymal enhancement: percent change of mean FGT intensity, post vs pre."""
    pre, post, fgt = _arr(pre), _arr(post), _arr(fgt) != 0
    if not (pre.shape == post.shape == fgt.shape):
        raise ShapeMismatch(f"{pre.shape}, {post.shape}, {fgt.shape}")
    if not fgt.any():
        raise EmptyMask("FGT mask is empty")
    base = pre[fgt].astype(np.float64).mean()
    if base <= 0:
        raise NonPositiveBaseline(f"mean pre-contrast FGT intensity is {base}")
    return float(100.0 * (post[fgt].astype(np.float64).mean() - base) / base)
