"""Training loop with early stopping, and checkpoint persistence."""

from __future__ import annotations

import copy
import csv
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
import torch

from .augment import AugmentConfig, augment, sample_window
from .errors import ConfigError, DataError, DivergedLoss
from .inference import InferenceConfig, sliding_window_probs
from .losses import dice_ce_loss, multiscale_loss
from .models import build_model, config_from_dict, model_downsampling
from .splits import FoldSplit
from .volumes import Case, split_breasts, zscore_array

log = logging.getLogger(__name__)

DETERMINISTIC_ENV = "FGTSEG_DETERMINISTIC"


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    weight_decay: float = 0.01  # torch AdamW default
    patience_epochs: int = 30
    window: tuple[int, int, int] = (32, 256, 256)
    batch_size: int = 2
    max_epochs: int = 1000
    seed: int = 0
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    margin: int = 2
    val_overlap: float = 0.5

    def __post_init__(self):
        self.window = tuple(int(w) for w in self.window)
        if isinstance(self.augment, dict):
            self.augment = AugmentConfig(**self.augment)
        if self.patience_epochs < 1:
            raise ValueError("patience_epochs must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


def toy_train_config(**overrides) -> TrainConfig:
    params = dict(window=(8, 64, 64), batch_size=8, learning_rate=1e-3, max_epochs=200)
    params.update(overrides)
    return TrainConfig(**params)


def set_deterministic(enabled: Optional[bool] = None) -> bool:
    """Turn off nondeterministic kernels, by default when ``FGTSEG_DETERMINISTIC`` is set."""
    if enabled is None:
        enabled = os.environ.get(DETERMINISTIC_ENV, "1") not in ("0", "false", "False", "")
    torch.use_deterministic_algorithms(bool(enabled), warn_only=True)
    return bool(enabled)


class EarlyStopping:
    """Tracks the best validation loss; improvement means strictly lower."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best_loss = math.inf
        self.best_epoch = 0

    def update(self, epoch: int, loss: float) -> bool:
        if loss < self.best_loss:
            self.best_loss = loss
            self.best_epoch = epoch
            return True
        return False

    def should_stop(self, epoch: int) -> bool:
        return epoch - self.best_epoch >= self.patience


@dataclass
class Checkpoint:
    model_kind: str
    model_config: dict
    state_dict: dict
    seed: int
    train_config: dict = field(default_factory=dict)
    history: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_val_loss: float = math.inf
    fold_index: Optional[int] = None
    split: Optional[dict] = None

    @property
    def epochs_run(self) -> int:
        return len(self.history)

    def build_model(self) -> torch.nn.Module:
        model = build_model(self.model_kind, config_from_dict(self.model_kind, self.model_config))
        model.load_state_dict(self.state_dict)
        return model.eval()

    def manifest(self) -> dict:
        return {
            "model_kind": self.model_kind,
            "model_config": self.model_config,
            "train_config": self.train_config,
            "seed": self.seed,
            "epochs_run": self.epochs_run,
            "best_epoch": self.best_epoch,
            "best_val_loss": self.best_val_loss,
            "fold_index": self.fold_index,
            "split": self.split,
        }

    def save(self, directory) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        torch.save(self.state_dict, directory / "weights.pt")
        (directory / "manifest.json").write_text(json.dumps(self.manifest(), indent=2, sort_keys=True) + "\n")
        with (directory / "history.csv").open("w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["epoch", "train_loss", "val_loss"], lineterminator="\n")
            writer.writeheader()
            writer.writerows(self.history)
        return directory

    @classmethod
    def load(cls, directory) -> "Checkpoint":
        directory = Path(directory)
        meta = json.loads((directory / "manifest.json").read_text())
        history = []
        hist_path = directory / "history.csv"
        if hist_path.exists():
            with hist_path.open() as fh:
                history = [
                    {"epoch": int(r["epoch"]), "train_loss": float(r["train_loss"]), "val_loss": float(r["val_loss"])}
                    for r in csv.DictReader(fh)
                ]
        state = torch.load(directory / "weights.pt", map_location="cpu", weights_only=True)
        return cls(
            model_kind=meta["model_kind"], model_config=meta["model_config"], state_dict=state,
            seed=meta["seed"], train_config=meta.get("train_config", {}), history=history,
            best_epoch=meta["best_epoch"], best_val_loss=meta["best_val_loss"],
            fold_index=meta.get("fold_index"), split=meta.get("split"),
        )


def prepare_crops(cases: Sequence[Case], margin: int = 2) -> list[tuple[np.ndarray, np.ndarray]]:
    """Normalized ``(image, fgt)`` crops for every nonempty breast side of every case."""
    samples = []
    for case in cases:
        if case.fgt_mask is None:
            raise DataError(f"case {case.case_id} has no FGT mask to train on")
        for _, image, _, fgt in split_breasts(case, margin=margin).sides():
            samples.append((zscore_array(image), fgt))
    return samples


def _sample_seed(seed: int, epoch: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, epoch, index]).generate_state(1)[0])


def validation_loss(model, samples, window, overlap: float = 0.5) -> float:
    """Mean Dice+CE over full crops, predicted by sliding window at the training window size."""
    cfg = InferenceConfig(window=window, overlap=overlap, tta_flips=False, blend="uniform")
    model.eval()
    losses = []
    with torch.no_grad():
        for image, fgt in samples:
            probs = sliding_window_probs(model, torch.from_numpy(image), cfg)
            # log-probabilities act as logits: softmax(log p) == p
            logits = probs.clamp_min(1e-7).log()
            losses.append(float(dice_ce_loss(logits, torch.from_numpy(fgt.astype(np.int64)))))
    return float(np.mean(losses))


def train_model(model_kind: str, model_config, train_cases: Sequence[Case], val_cases: Sequence[Case],
                cfg: TrainConfig, fold_index: Optional[int] = None, split: Optional[dict] = None,
                on_epoch: Optional[Callable[[dict], None]] = None) -> Checkpoint:
    """Optimize a fresh model with AdamW and keep the weights of the best validation epoch."""
    torch.manual_seed(cfg.seed)
    model = build_model(model_kind, model_config)
    fd, fi = model_downsampling(model)
    d, h, w = cfg.window
    if d % fd or h % fi or w % fi:
        raise ConfigError(f"window {cfg.window} not divisible by the model's downsampling ({fd}, {fi}, {fi})")
    opt = torch.optim.AdamW(model.parameters(), lr=cfg.learning_rate, weight_decay=cfg.weight_decay)
    train_samples = prepare_crops(train_cases, cfg.margin)
    val_samples = prepare_crops(val_cases, cfg.margin)
    if not train_samples or not val_samples:
        raise DataError("training and validation sets must both contain at least one breast crop")

    stopper = EarlyStopping(cfg.patience_epochs)
    best_state = copy.deepcopy(model.state_dict())
    history = []
    for epoch in range(1, cfg.max_epochs + 1):
        model.train()
        order = np.random.default_rng([cfg.seed, epoch]).permutation(len(train_samples))
        epoch_losses = []
        for b in range(0, len(order), cfg.batch_size):
            images, masks = [], []
            for idx in order[b:b + cfg.batch_size]:
                s = _sample_seed(cfg.seed, epoch, int(idx))
                image, fgt = train_samples[idx]
                win, win_mask, _ = sample_window(image, fgt, cfg.window, s)
                win, win_mask = augment(win, win_mask, s, cfg.augment)
                images.append(win)
                masks.append(win_mask)
            x = torch.from_numpy(np.stack(images).astype(np.float32))
            y = torch.from_numpy(np.stack(masks).astype(np.int64))
            loss = multiscale_loss(model(x), y)
            if not torch.isfinite(loss):
                raise DivergedLoss(f"non-finite training loss at epoch {epoch}, batch {b // cfg.batch_size}")
            opt.zero_grad(set_to_none=True)
            loss.backward()
            opt.step()
            epoch_losses.append(loss.item())

        val = validation_loss(model, val_samples, cfg.window, cfg.val_overlap)
        if not math.isfinite(val):
            raise DivergedLoss(f"non-finite validation loss at epoch {epoch}")
        record = {"epoch": epoch, "train_loss": float(np.mean(epoch_losses)), "val_loss": val}
        history.append(record)
        if stopper.update(epoch, val):
            best_state = copy.deepcopy(model.state_dict())
        log.info("epoch %d train %.4f val %.4f (best %.4f @ %d)", epoch, record["train_loss"], val,
                 stopper.best_loss, stopper.best_epoch)
        if on_epoch is not None:
            on_epoch(record)
        if stopper.should_stop(epoch):
            break

    cfg_dict = model_config.to_dict() if hasattr(model_config, "to_dict") else dict(model_config or {})
    return Checkpoint(
        model_kind=model_kind, model_config=_jsonable(cfg_dict), state_dict=best_state, seed=cfg.seed,
        train_config=_jsonable(cfg.to_dict()), history=history, best_epoch=stopper.best_epoch,
        best_val_loss=stopper.best_loss, fold_index=fold_index, split=_jsonable(split) if split else None,
    )


def _jsonable(d: dict) -> dict:
    """Tuples become lists, matching what a saved manifest reads back as."""
    return json.loads(json.dumps(d))


def train_fold(model_kind: str, fold: FoldSplit, cases: Sequence[Case], cfg: TrainConfig,
               model_config=None, **kwargs) -> Checkpoint:
    by_id = {c.case_id: c for c in cases}
    missing = [i for i in fold.train_ids + fold.val_ids if i not in by_id]
    if missing:
        raise DataError(f"fold {fold.fold_index}: unknown case ids {missing}")
    model_config = model_config if model_config is not None else config_from_dict(model_kind)
    return train_model(
        model_kind, model_config,
        [by_id[i] for i in fold.train_ids], [by_id[i] for i in fold.val_ids], cfg,
        fold_index=fold.fold_index, split=fold.to_dict(), **kwargs,
    )
