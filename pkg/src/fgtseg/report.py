"""Figures: DSC/ASSD against breast density, and per-case error overlays."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .evaluation import EvalRecord  # noqa: E402
from .volumes import Case  # noqa: E402


def density_scatter(records: Sequence[EvalRecord], path, label: str = "model") -> Path:
    """Two panels: DSC and ASSD against manually derived breast density."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    dens = np.array([r.density_manual for r in records])
    dsc = np.array([r.dsc for r in records])
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.8))
    axes[0].scatter(dens, dsc, s=18, label=label)
    axes[0].set_xlabel("breast density (manual)")
    axes[0].set_ylabel("DSC")
    if len(records) >= 2 and np.ptp(dens) > 0:
        slope, intercept = np.polyfit(dens, dsc, 1)
        xs = np.linspace(dens.min(), dens.max(), 50)
        axes[0].plot(xs, slope * xs + intercept, lw=1, color="gray")
    with_assd = [(r.density_manual, r.assd_mm) for r in records if r.assd_mm is not None]
    if with_assd:
        d, a = zip(*with_assd)
        axes[1].scatter(d, a, s=18, label=label)
    axes[1].set_xlabel("breast density (manual)")
    axes[1].set_ylabel("ASSD [mm]")
    for ax in axes:
        ax.grid(alpha=0.3)
    axes[0].legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path


def error_overlay(case: Case, pred: np.ndarray, path, slice_index: int | None = None) -> Path:
    """Subtraction image with correctly labelled FGT in green and errors (FP or FN) in red."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    truth = case.fgt_mask.data.astype(bool)
    pred = np.asarray(pred).astype(bool)
    if slice_index is None:
        slice_index = int(np.argmax(truth.sum(axis=(1, 2)))) if truth.any() else case.shape[0] // 2
    sub = (case.post.data - case.pre.data)[slice_index]
    lo, hi = np.percentile(sub, [1, 99])
    gray = np.clip((sub - lo) / max(hi - lo, 1e-9), 0, 1)
    rgb = np.stack([gray] * 3, axis=-1)
    correct = (truth & pred)[slice_index]
    wrong = (truth ^ pred)[slice_index]
    rgb[correct] = 0.5 * rgb[correct] + 0.5 * np.array([0.0, 1.0, 0.0])
    rgb[wrong] = 0.3 * rgb[wrong] + 0.7 * np.array([1.0, 0.0, 0.0])
    plt.imsave(path, rgb)
    return path
