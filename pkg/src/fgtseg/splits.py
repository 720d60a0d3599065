"""Cross-validation splits: k disjoint test folds, remaining cases split 80/20 into train/val."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import TooFewCases


@dataclass(frozen=True)
class FoldSplit:
    fold_index: int
    train_ids: tuple[str, ...]
    val_ids: tuple[str, ...]
    test_ids: tuple[str, ...]

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "FoldSplit":
        return cls(int(d["fold_index"]), tuple(d["train_ids"]), tuple(d["val_ids"]), tuple(d["test_ids"]))


def make_cv_splits(case_ids, k: int = 5, seed: int = 0, val_fraction: float = 0.2) -> list[FoldSplit]:
    ids = list(case_ids)
    if len(set(ids)) != len(ids):
        raise ValueError("case ids must be unique")
    if k < 2 or len(ids) < k:
        raise TooFewCases(f"{len(ids)} cases cannot form {k} folds")
    rng = np.random.default_rng(seed)
    order = [ids[i] for i in rng.permutation(len(ids))]
    folds = np.array_split(np.arange(len(order)), k)
    splits = []
    for f, test_idx in enumerate(folds):
        test = [order[i] for i in test_idx]
        rest = [c for c in order if c not in set(test)]
        rest = [rest[i] for i in rng.permutation(len(rest))]
        n_val = max(1, int(round(val_fraction * len(rest)))) if len(rest) > 1 else 0
        splits.append(FoldSplit(f, tuple(rest[n_val:]), tuple(rest[:n_val]), tuple(test)))
    return splits


def save_splits(splits: list[FoldSplit], path, **meta) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = dict(meta, folds=[s.to_dict() for s in splits])
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def load_splits(path) -> list[FoldSplit]:
    payload = json.loads(Path(path).read_text())
    return [FoldSplit.from_dict(d) for d in payload["folds"]]
