"""Per-case evaluation records and cohort-level statistics."""

from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import DegenerateInput, EmptyMask, MissingCase, NonPositiveBaseline, TooFewValues
from .metrics import assd, bpe, breast_density, dice
from .stats import bootstrap_ci, mean_std, pearson, permutation_test
from .volumes import BinaryMask, Case

log = logging.getLogger(__name__)


@dataclass
class EvalRecord:
    case_id: str
    dsc: float
    assd_mm: Optional[float]
    density_manual: float
    density_auto: float
    bpe_manual: Optional[float]
    bpe_auto: Optional[float]

    def __post_init__(self):
        if not 0.0 <= self.dsc <= 1.0:
            raise ValueError(f"dsc out of range: {self.dsc}")
        if not (0.0 <= self.density_manual <= 1.0 and 0.0 <= self.density_auto <= 1.0):
            raise ValueError("densities must lie in [0, 1]")
        if self.assd_mm is not None and self.assd_mm < 0:
            raise ValueError("assd must be non-negative")


RECORD_FIELDS = [f.name for f in fields(EvalRecord)]

SUMMARY_SCHEMA = {
    "type": "object",
    "required": ["n_cases", "dsc", "assd_mm", "density", "bpe", "pearson_density", "pearson_bpe", "flags"],
    "properties": {
        "n_cases": {"type": "integer", "minimum": 0},
        "dsc": {"$ref": "#/definitions/aggregate"},
        "assd_mm": {"$ref": "#/definitions/aggregate"},
        "density": {"type": "object"},
        "bpe": {"type": "object"},
        "pearson_density": {"type": ["number", "null"], "minimum": -1, "maximum": 1},
        "pearson_bpe": {"type": ["number", "null"], "minimum": -1, "maximum": 1},
        "flags": {"type": "array", "items": {"type": "string"}},
        "comparison": {
            "type": "object",
            "properties": {
                "p_dsc": {"type": ["number", "null"], "exclusiveMinimum": 0, "maximum": 1},
                "p_assd": {"type": ["number", "null"], "exclusiveMinimum": 0, "maximum": 1},
            },
        },
        "seed": {"type": "integer"},
        "config_hash": {"type": "string"},
    },
    "definitions": {
        "aggregate": {
            "type": "object",
            "required": ["mean", "std", "n", "ci"],
            "properties": {
                "mean": {"type": ["number", "null"]},
                "std": {"type": ["number", "null"], "minimum": 0},
                "n": {"type": "integer", "minimum": 0},
                "ci": {"type": ["array", "null"], "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
            },
        },
    },
}


def evaluate_case(pred: BinaryMask, truth: BinaryMask, case: Case) -> EvalRecord:
    spacing = case.spacing
    try:
        distance = assd(pred.data, truth.data, spacing)
    except EmptyMask:
        warnings.warn(f"{case.case_id}: ASSD undefined (empty mask); excluded from aggregates", stacklevel=2)
        distance = None

    def _bpe(mask):
        try:
            return bpe(case.pre, case.post, mask)
        except (EmptyMask, NonPositiveBaseline) as exc:
            warnings.warn(f"{case.case_id}: BPE undefined ({exc})", stacklevel=3)
            return None

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        density_auto = breast_density(pred.data, case.breast_mask.data)
    return EvalRecord(
        case_id=case.case_id,
        dsc=dice(pred.data, truth.data),
        assd_mm=distance,
        density_manual=breast_density(truth.data, case.breast_mask.data),
        density_auto=density_auto,
        bpe_manual=_bpe(truth.data),
        bpe_auto=_bpe(pred.data),
    )


def _aggregate(values, seed: int, n_resamples: int) -> dict:
    values = [v for v in values if v is not None]
    if not values:
        return {"mean": None, "std": None, "n": 0, "ci": None}
    mean, std = mean_std(values)
    try:
        ci = list(bootstrap_ci(values, n_resamples=n_resamples, seed=seed))
    except TooFewValues:
        ci = None
    return {"mean": mean, "std": std, "n": len(values), "ci": ci}


def _paired_corr(records, a_key, b_key, flags, name):
    pairs = [(getattr(r, a_key), getattr(r, b_key)) for r in records]
    pairs = [(a, b) for a, b in pairs if a is not None and b is not None]
    try:
        return pearson([a for a, _ in pairs], [b for _, b in pairs])
    except DegenerateInput as exc:
        flags.append(f"DegenerateInput: {name} ({exc})")
        return None


def summarize(records: Sequence[EvalRecord], other: Optional[Sequence[EvalRecord]] = None,
              seed: int = 0, n_resamples: int = 10000) -> dict:
    flags: list[str] = []
    summary = {
        "n_cases": len(records),
        "dsc": _aggregate([r.dsc for r in records], seed, n_resamples),
        "assd_mm": _aggregate([r.assd_mm for r in records], seed, n_resamples),
        "density": {
            "manual": _aggregate([r.density_manual for r in records], seed, n_resamples),
            "auto": _aggregate([r.density_auto for r in records], seed, n_resamples),
        },
        "bpe": {
            "manual": _aggregate([r.bpe_manual for r in records], seed, n_resamples),
            "auto": _aggregate([r.bpe_auto for r in records], seed, n_resamples),
        },
        "pearson_density": _paired_corr(records, "density_manual", "density_auto", flags, "pearson_density"),
        "pearson_bpe": _paired_corr(records, "bpe_manual", "bpe_auto", flags, "pearson_bpe"),
        "flags": flags,
    }
    if other is not None:
        summary["comparison"] = compare(records, other, seed=seed, flags=flags)
    return summary


def compare(records_a, records_b, seed: int = 0, n_permutations: int = 10000, flags=None) -> dict:
    """Paired permutation p-values (model A vs model B) for DSC and ASSD, matched by case id."""
    flags = flags if flags is not None else []
    b_by_id = {r.case_id: r for r in records_b}
    missing = [r.case_id for r in records_a if r.case_id not in b_by_id]
    if missing:
        raise MissingCase(missing)
    out = {}
    for key, name in (("dsc", "p_dsc"), ("assd_mm", "p_assd")):
        pairs = [(getattr(r, key), getattr(b_by_id[r.case_id], key)) for r in records_a]
        pairs = [(a, b) for a, b in pairs if a is not None and b is not None]
        try:
            out[name] = permutation_test([a for a, _ in pairs], [b for _, b in pairs],
                                         n_permutations=n_permutations, seed=seed)
        except TooFewValues as exc:
            flags.append(f"TooFewValues: {name} ({exc})")
            out[name] = None
    return out


def evaluate_cohort(predictions: Mapping[str, BinaryMask], ground_truths: Optional[Mapping[str, BinaryMask]],
                    cases: Sequence[Case], other_predictions: Optional[Mapping[str, BinaryMask]] = None,
                    seed: int = 0, n_resamples: int = 10000):
    """Score every case and aggregate.

    ``ground_truths`` defaults to each case's own FGT mask. When
    ``other_predictions`` is given, the summary gains paired permutation
    p-values comparing the two prediction sets.
    """
    if ground_truths is None:
        ground_truths = {c.case_id: c.fgt_mask for c in cases if c.fgt_mask is not None}
    ids = [c.case_id for c in cases]
    missing = [i for i in ids if i not in predictions or i not in ground_truths]
    if other_predictions is not None:
        missing += [i for i in ids if i not in other_predictions]
    if missing:
        raise MissingCase(set(missing))
    records = [evaluate_case(predictions[c.case_id], ground_truths[c.case_id], c) for c in cases]
    other = None
    if other_predictions is not None:
        other = [evaluate_case(other_predictions[c.case_id], ground_truths[c.case_id], c) for c in cases]
    return records, summarize(records, other, seed=seed, n_resamples=n_resamples)


def write_records(records: Sequence[EvalRecord], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=RECORD_FIELDS, lineterminator="\n")
        writer.writeheader()
        for r in records:
            writer.writerow({k: ("" if v is None else v) for k, v in asdict(r).items()})
    return path


def read_records(path) -> list[EvalRecord]:
    def _num(v):
        return None if v in ("", None) else float(v)

    with Path(path).open(newline="") as fh:
        return [
            EvalRecord(
                case_id=row["case_id"], dsc=float(row["dsc"]), assd_mm=_num(row["assd_mm"]),
                density_manual=float(row["density_manual"]), density_auto=float(row["density_auto"]),
                bpe_manual=_num(row["bpe_manual"]), bpe_auto=_num(row["bpe_auto"]),
            )
            for row in csv.DictReader(fh)
        ]


def density_strata(records: Sequence[EvalRecord], edges=(0.0, 0.2, 0.3, 0.4, 1.0)) -> list[dict]:
    """Mean DSC and ASSD per manual-density bin, for the density-stratified analysis."""
    out = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        members = [r for r in records if lo <= r.density_manual < hi or (hi == edges[-1] and r.density_manual == hi)]
        dscs = [r.dsc for r in members]
        dists = [r.assd_mm for r in members if r.assd_mm is not None]
        out.append({
            "density_lo": lo, "density_hi": hi, "n": len(members),
            "dsc_mean": float(np.mean(dscs)) if dscs else None,
            "assd_mean": float(np.mean(dists)) if dists else None,
        })
    return out


def json_safe(obj):
    """Replace NaN/inf with None so summaries serialize as strict JSON."""
    if isinstance(obj, dict):
        return {k: json_safe(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [json_safe(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj
