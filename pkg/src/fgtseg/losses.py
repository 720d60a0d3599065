"""Dice + cross-entropy loss and its multi-scale (deep supervision) extension."""

from __future__ import annotations

import torch
import torch.nn.functional as F

from .errors import ShapeMismatch
from .models.blocks import ModelOutput

SMOOTH = 1e-5


def _batched(logits: torch.Tensor, target: torch.Tensor):
    if logits.ndim == 4:
        logits = logits.unsqueeze(0)
        target = target.unsqueeze(0)
    if target.ndim == logits.ndim:
        target = target.squeeze(1)
    if logits.ndim != 5 or target.shape != logits.shape[:1] + logits.shape[2:]:
        raise ShapeMismatch(f"logits {tuple(logits.shape)} vs target {tuple(target.shape)}")
    return logits, target.long()


def dice_ce_loss(logits: torch.Tensor, target: torch.Tensor, smooth: float = SMOOTH) -> torch.Tensor:
    """Soft Dice loss on the foreground class plus voxel-mean cross-entropy.

    ``logits`` is ``(C, D, H, W)`` or ``(B, C, D, H, W)``; ``target`` holds class
    indices with the matching spatial shape. The Dice term pools all voxels of
    the batch, so windows without foreground do not dominate.
    """
    logits, target = _batched(logits, target)
    ce = F.cross_entropy(logits, target)
    fg = logits.softmax(dim=1)[:, 1]
    tgt = (target == 1).to(fg.dtype)
    dice = (2 * (fg * tgt).sum() + smooth) / (fg.sum() + tgt.sum() + smooth)
    return (1 - dice) + ce


def resize_target(target: torch.Tensor, shape) -> torch.Tensor:
    """Nearest-neighbour resize of a ``(B, D, H, W)`` label tensor."""
    if tuple(target.shape[-3:]) == tuple(shape):
        return target
    return F.interpolate(target.unsqueeze(1).float(), size=tuple(shape), mode="nearest").squeeze(1).to(target.dtype)


def scale_weights(levels: int) -> list[float]:
    raw = [0.5**k for k in range(levels + 1)]
    total = sum(raw)
    return [w / total for w in raw]


def multiscale_loss(output: ModelOutput, target: torch.Tensor) -> torch.Tensor:
    """Weighted sum of :func:`dice_ce_loss` over the main and auxiliary outputs.

    Weights halve per level (1, 1/2, 1/4, ...) and are normalized to sum to 1.
    """
    main = output.main_logits
    if main.ndim == 4:
        main = main.unsqueeze(0)
        target = target.unsqueeze(0)
        aux = [a.unsqueeze(0) for a in output.aux_logits]
    else:
        aux = list(output.aux_logits)
    if tuple(target.shape[-3:]) != tuple(main.shape[-3:]):
        raise ShapeMismatch(f"target {tuple(target.shape)} does not match logits {tuple(main.shape)}")
    if target.ndim == 5:
        target = target.squeeze(1)
    weights = scale_weights(len(aux))
    total = weights[0] * dice_ce_loss(main, target)
    for w, logits in zip(weights[1:], aux):
        total = total + w * dice_ce_loss(logits, resize_target(target, logits.shape[-3:]))
    return total
