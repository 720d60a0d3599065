"""Volume/mask containers and the preprocessing steps of the crop-then-segment pipeline.

Axis convention everywhere: ``(depth, height, width)`` for a single volume and
``(channel, depth, height, width)`` for stacked inputs. Depth is the slice axis.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import BoxOutOfBounds, ConstantVolume, DataError, EmptyMask, EmptySide, ShapeMismatch

Spacing = tuple[float, float, float]

# Channel order of every network input. Changing it invalidates checkpoints.
CHANNELS = ("pre", "subtraction")


def _check_spacing(spacing: Sequence[float]) -> Spacing:
    spacing = tuple(float(s) for s in spacing)
    if len(spacing) != 3 or not all(s > 0 for s in spacing):
        raise DataError(f"spacing must be three positive values, got {spacing}")
    return spacing


@dataclass(frozen=True)
class Volume:
    data: np.ndarray
    spacing: Spacing = (1.0, 1.0, 1.0)
    identifier: str = ""

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3 or min(data.shape) < 1:
            raise DataError(f"volume must be 3D with non-empty axes, got shape {data.shape}")
        if not np.issubdtype(data.dtype, np.floating):
            data = data.astype(np.float64)
        if not np.all(np.isfinite(data)):
            raise DataError(f"volume {self.identifier!r} contains non-finite values")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "spacing", _check_spacing(self.spacing))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape


@dataclass(frozen=True)
class BinaryMask:
    data: np.ndarray
    spacing: Spacing = (1.0, 1.0, 1.0)
    identifier: str = ""

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise DataError(f"mask must be 3D, got shape {data.shape}")
        if not np.all((data == 0) | (data == 1)):
            raise DataError(f"mask {self.identifier!r} has values outside {{0, 1}}")
        if data.dtype != np.uint8:
            data = data.astype(np.uint8)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "spacing", _check_spacing(self.spacing))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def count(self) -> int:
        return int(self.data.sum())

    @classmethod
    def from_array(cls, data, spacing=(1.0, 1.0, 1.0), identifier="") -> "BinaryMask":
        """Build from any array, treating nonzero as foreground."""
        return cls((np.asarray(data) != 0).astype(np.uint8), spacing, identifier)


@dataclass(frozen=True)
class Case:
    case_id: str
    pre: Volume
    post: Volume
    breast_mask: BinaryMask
    fgt_mask: Optional[BinaryMask] = None

    def __post_init__(self):
        members = [self.pre, self.post, self.breast_mask] + ([self.fgt_mask] if self.fgt_mask is not None else [])
        for m in members[1:]:
            if m.shape != self.pre.shape:
                raise ShapeMismatch(f"case {self.case_id}: shape {m.shape} != {self.pre.shape}")
            if not np.allclose(m.spacing, self.pre.spacing):
                raise ShapeMismatch(f"case {self.case_id}: spacing {m.spacing} != {self.pre.spacing}")
        if self.fgt_mask is not None and np.any(self.fgt_mask.data > self.breast_mask.data):
            raise DataError(f"case {self.case_id}: FGT mask extends outside the breast mask")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.pre.shape

    @property
    def spacing(self) -> Spacing:
        return self.pre.spacing


@dataclass(frozen=True)
class Box:
    """Half-open index box ``[start, stop)`` per axis."""

    start: tuple[int, int, int]
    stop: tuple[int, int, int]

    @property
    def slices(self) -> tuple[slice, slice, slice]:
        return tuple(slice(a, b) for a, b in zip(self.start, self.stop))

    @property
    def shape(self) -> tuple[int, int, int]:
        return tuple(b - a for a, b in zip(self.start, self.stop))

    def within(self, shape: Sequence[int]) -> bool:
        return all(0 <= a < b <= n for a, b, n in zip(self.start, self.stop, shape))

    def to_list(self) -> list[list[int]]:
        return [list(self.start), list(self.stop)]


@dataclass
class CropPair:
    """Left/right crops of a case. A side is ``None`` when its half holds no breast voxels.

    ``left``/``right`` are ``(2, d, h, w)`` arrays in :data:`CHANNELS` order, not yet
    normalized. ``left_fgt``/``right_fgt`` are the matching FGT crops when the case has one.
    """

    left: Optional[np.ndarray]
    right: Optional[np.ndarray]
    left_box: Optional[Box]
    right_box: Optional[Box]
    left_fgt: Optional[np.ndarray] = None
    right_fgt: Optional[np.ndarray] = None
    empty_sides: tuple[str, ...] = field(default=())

    def sides(self):
        """Yield ``(name, image_crop, box, fgt_crop)`` for each nonempty side."""
        if self.left is not None:
            yield "left", self.left, self.left_box, self.left_fgt
        if self.right is not None:
            yield "right", self.right, self.right_box, self.right_fgt


def zscore_normalize(v: Volume) -> Volume:
    """Shift and scale to zero mean and unit population standard deviation."""
    data = v.data
    if data.size < 2:
        raise DataError("z-score normalization needs at least two voxels")
    std = data.std()
    if std == 0:
        raise ConstantVolume(f"volume {v.identifier!r} is constant")
    return Volume((data - data.mean()) / std, v.spacing, v.identifier)


def zscore_array(arr: np.ndarray) -> np.ndarray:
    """Per-channel z-score of a ``(C, ...)`` array; constant channels become zeros."""
    out = np.empty(arr.shape, dtype=np.float32)
    for c in range(arr.shape[0]):
        ch = arr[c].astype(np.float64)
        std = ch.std()
        out[c] = 0.0 if std == 0 else (ch - ch.mean()) / std
    return out


def subtract(post: Volume, pre: Volume) -> Volume:
    if post.shape != pre.shape or not np.allclose(post.spacing, pre.spacing):
        raise ShapeMismatch(f"post {post.shape}/{post.spacing} vs pre {pre.shape}/{pre.spacing}")
    return Volume(post.data - pre.data, post.spacing, f"{post.identifier}-sub")


def stack_channels(pre: Volume, sub: Volume) -> np.ndarray:
    """Stack into a ``(2, D, H, W)`` array ordered (pre, subtraction)."""
    if pre.shape != sub.shape:
        raise ShapeMismatch(f"pre {pre.shape} vs subtraction {sub.shape}")
    return np.stack([pre.data, sub.data], axis=0)


def _side_box(mask: np.ndarray, lo: int, hi: int, margin: int) -> Optional[Box]:
    side = mask[:, :, lo:hi]
    if not side.any():
        return None
    start, stop = [], []
    for axis in range(3):
        other = tuple(a for a in range(3) if a != axis)
        idx = np.flatnonzero(side.any(axis=other))
        a, b = int(idx[0]), int(idx[-1]) + 1
        if axis == 2:
            a, b = a + lo, b + lo
            bound_lo, bound_hi = lo, hi
        else:
            bound_lo, bound_hi = 0, mask.shape[axis]
        start.append(max(a - margin, bound_lo))
        stop.append(min(b + margin, bound_hi))
    return Box(tuple(start), tuple(stop))


def split_breasts(case: Case, margin: int = 2) -> CropPair:
    """Crop the left and right breast using the breast mask.

    The width axis is divided at the center of the mask's bounding box along
    width. A mask lying entirely on one side of the volume midline is treated
    as a single breast and split at the midline instead, leaving the other side
    empty. Each side gets the tight box around its mask voxels, grown by
    ``margin`` and clipped to the volume and to its own half, so the two boxes
    never overlap. Crop content is the raw rectangular image region.
    """
    mask = case.breast_mask.data
    if not mask.any():
        raise EmptyMask(f"case {case.case_id}: breast mask is empty")
    cols = np.flatnonzero(mask.any(axis=(0, 1)))
    width = mask.shape[2]
    mid = (int(cols[0]) + int(cols[-1]) + 1) // 2
    if cols[-1] < width // 2 or cols[0] >= width // 2:
        mid = width // 2

    image = stack_channels(case.pre, subtract(case.post, case.pre))
    fgt = case.fgt_mask.data if case.fgt_mask is not None else None

    crops: dict = {}
    empty = []
    for side, lo, hi in (("left", 0, mid), ("right", mid, width)):
        box = _side_box(mask, lo, hi, margin)
        if box is None:
            warnings.warn(EmptySide(side), stacklevel=2)
            empty.append(side)
            crops[side] = (None, None, None)
            continue
        sl = box.slices
        crops[side] = (image[(slice(None),) + sl].copy(), box, fgt[sl].copy() if fgt is not None else None)

    return CropPair(
        left=crops["left"][0],
        right=crops["right"][0],
        left_box=crops["left"][1],
        right_box=crops["right"][1],
        left_fgt=crops["left"][2],
        right_fgt=crops["right"][2],
        empty_sides=tuple(empty),
    )


def uncrop(mask_crop: np.ndarray | BinaryMask, box: Box, full_shape: Sequence[int],
           spacing: Spacing = (1.0, 1.0, 1.0)) -> BinaryMask:
    """Place a cropped mask back into a zero volume of ``full_shape``."""
    if isinstance(mask_crop, BinaryMask):
        spacing = mask_crop.spacing
        mask_crop = mask_crop.data
    full_shape = tuple(int(n) for n in full_shape)
    if not box.within(full_shape):
        raise BoxOutOfBounds(f"box {box.to_list()} outside volume {full_shape}")
    if tuple(mask_crop.shape) != box.shape:
        raise ShapeMismatch(f"crop shape {mask_crop.shape} != box shape {box.shape}")
    out = np.zeros(full_shape, dtype=np.uint8)
    out[box.slices] = np.asarray(mask_crop) != 0
    return BinaryMask(out, spacing)
