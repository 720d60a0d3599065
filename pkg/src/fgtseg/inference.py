"""Sliding-window prediction, flip test-time augmentation and cross-fold majority voting."""

from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
import torch
import torch.nn as nn

from .errors import EmptyEnsemble, ShapeMismatch
from .volumes import BinaryMask, Case, split_breasts, uncrop, zscore_array

FLIP_COMBINATIONS = [axes for r in range(4) for axes in itertools.combinations((0, 1, 2), r)]


@dataclass
class InferenceConfig:
    window: tuple[int, int, int] = (32, 256, 256)
    overlap: float = 0.5
    tta_flips: bool = True
    blend: str = "uniform"
    batch_size: int = 4
    margin: int = 2

    def __post_init__(self):
        self.window = tuple(int(w) for w in self.window)
        if not 0 <= self.overlap < 1:
            raise ValueError(f"overlap must lie in [0, 1), got {self.overlap}")
        if self.blend not in ("uniform", "gaussian"):
            raise ValueError(f"blend must be 'uniform' or 'gaussian', got {self.blend!r}")

    def to_dict(self) -> dict:
        return asdict(self)


def window_starts(size: int, window: int, overlap: float) -> list[int]:
    """Start offsets along one axis; the last window is clamped to the boundary."""
    if size <= window:
        return [0]
    stride = max(1, int(window * (1 - overlap)))
    starts = list(range(0, size - window + 1, stride))
    if starts[-1] != size - window:
        starts.append(size - window)
    return starts


def _importance(window, blend: str, device) -> torch.Tensor:
    if blend == "uniform":
        return torch.ones(window, device=device)
    grids = torch.meshgrid(*[torch.arange(n, dtype=torch.float64) for n in window], indexing="ij")
    w = torch.ones(window, dtype=torch.float64)
    for g, n in zip(grids, window):
        sigma = max(n / 8.0, 1e-3)
        w = w * torch.exp(-0.5 * ((g - (n - 1) / 2) / sigma) ** 2)
    w = w / w.max()
    return w.clamp_min(1e-3).to(device=device, dtype=torch.float32)


def _logits(model: nn.Module, x: torch.Tensor) -> torch.Tensor:
    out = model(x)
    return out.main_logits if hasattr(out, "main_logits") else out


def sliding_window_probs(model: nn.Module, crop: torch.Tensor, cfg: InferenceConfig) -> torch.Tensor:
    """Tensor core of :func:`sliding_window_predict`; ``crop`` is ``(C, D, H, W)``.

    Gradients are not disabled here, so callers decide whether to track them.
    """
    spatial = tuple(crop.shape[1:])
    pads = []
    for n, w in zip(spatial, cfg.window):
        total = max(w - n, 0)
        pads.append((total // 2, total - total // 2))
    flat_pad = [v for a, b in reversed(pads) for v in (a, b)]
    x = torch.nn.functional.pad(crop, flat_pad) if any(flat_pad) else crop
    shape = tuple(x.shape[1:])

    starts = list(itertools.product(*[window_starts(n, w, cfg.overlap) for n, w in zip(shape, cfg.window)]))
    weight = _importance(cfg.window, cfg.blend, x.device)
    acc = None
    norm = torch.zeros(shape, device=x.device)
    for i in range(0, len(starts), cfg.batch_size):
        chunk = starts[i:i + cfg.batch_size]
        batch = torch.stack([
            x[(slice(None),) + tuple(slice(s, s + w) for s, w in zip(st, cfg.window))] for st in chunk
        ])
        probs = _logits(model, batch).softmax(dim=1)
        if acc is None:
            acc = torch.zeros((probs.shape[1],) + shape, device=x.device, dtype=probs.dtype)
        for st, p in zip(chunk, probs):
            sl = tuple(slice(s, s + w) for s, w in zip(st, cfg.window))
            acc[(slice(None),) + sl] += p * weight
            norm[sl] += weight
    out = acc / norm
    unpad = tuple(slice(a, a + n) for (a, _), n in zip(pads, spatial))
    return out[(slice(None),) + unpad]


def _as_tensor(crop) -> torch.Tensor:
    if isinstance(crop, torch.Tensor):
        return crop.float()
    return torch.from_numpy(np.ascontiguousarray(crop, dtype=np.float32))


def _device(model: nn.Module):
    return next(model.parameters()).device


def sliding_window_predict(model: nn.Module, crop, cfg: InferenceConfig) -> np.ndarray:
    """Class-probability map ``(num_classes, D, H, W)`` for a normalized, channel-stacked crop.

    Windows step by ``window * (1 - overlap)``; softmax outputs are blended with
    the configured weighting and divided by the accumulated weight.
    """
    model.eval()
    with torch.no_grad():
        probs = sliding_window_probs(model, _as_tensor(crop).to(_device(model)), cfg)
    return probs.cpu().numpy()


def tta_predict(model: nn.Module, crop, cfg: InferenceConfig) -> np.ndarray:
    """Average of sliding-window predictions over all 8 axis-flip combinations."""
    if not cfg.tta_flips:
        return sliding_window_predict(model, crop, cfg)
    x = _as_tensor(crop).to(_device(model))
    model.eval()
    total = None
    with torch.no_grad():
        for axes in FLIP_COMBINATIONS:
            dims = tuple(a + 1 for a in axes)
            xin = torch.flip(x, dims) if dims else x
            p = sliding_window_probs(model, xin, cfg)
            p = torch.flip(p, dims) if dims else p
            total = p if total is None else total + p
    return (total / len(FLIP_COMBINATIONS)).cpu().numpy()


def binarize(probs: np.ndarray) -> np.ndarray:
    """Per-voxel argmax over classes; ties go to the lowest class index (background)."""
    return np.argmax(probs, axis=0).astype(np.uint8)


def ensemble_majority_vote(masks: Sequence) -> BinaryMask:
    """Voxel is foreground iff strictly more than half of the masks say so."""
    if len(masks) == 0:
        raise EmptyEnsemble("no masks to combine")
    arrays = [m.data if isinstance(m, BinaryMask) else np.asarray(m) for m in masks]
    if any(a.shape != arrays[0].shape for a in arrays):
        raise ShapeMismatch("ensemble members differ in shape")
    spacing = masks[0].spacing if isinstance(masks[0], BinaryMask) else (1.0, 1.0, 1.0)
    votes = np.sum([a != 0 for a in arrays], axis=0)
    return BinaryMask((2 * votes > len(arrays)).astype(np.uint8), spacing)


def predict_single(model: nn.Module, case: Case, cfg: InferenceConfig) -> BinaryMask:
    """Crop both breasts, predict each with TTA, and paste the binary result back."""
    pair = split_breasts(case, margin=cfg.margin)
    out = np.zeros(case.shape, dtype=np.uint8)
    for _, image, box, _ in pair.sides():
        probs = tta_predict(model, zscore_array(image), cfg)
        out |= uncrop(binarize(probs), box, case.shape).data
    return BinaryMask(out, case.spacing, f"{case.case_id}-pred")


def predict_case(models: Sequence[nn.Module], case: Case, cfg: InferenceConfig) -> BinaryMask:
    """Full-volume FGT mask from an ensemble: one pipeline pass per model, then majority vote."""
    if len(models) == 0:
        raise EmptyEnsemble("no models given")
    masks = [predict_single(m, case, cfg) for m in models]
    voted = ensemble_majority_vote(masks)
    return BinaryMask(voted.data, case.spacing, f"{case.case_id}-pred")
