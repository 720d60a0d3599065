"""Command-line entry point: phantom, train, predict, evaluate, report.

Exit codes: 0 success, 1 usage error, 2 data error, 3 runtime failure.
Set ``FGTSEG_DETERMINISTIC=0`` to allow nondeterministic kernels.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from .errors import DataError, FGTSegError, MissingCase
from .evaluation import density_strata, evaluate_cohort, json_safe, write_records
from .inference import InferenceConfig, predict_case
from .io import load_mask, read_manifest, save_case, save_nifti, write_manifest
from .models import MODEL_KINDS, config_from_dict, toy_config
from .phantom import cohort_specs, generate_phantom
from .splits import load_splits, make_cv_splits, save_splits
from .training import Checkpoint, TrainConfig, set_deterministic, toy_train_config, train_fold

log = logging.getLogger("fgtseg")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def config_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _write_json(path: Path, payload: dict) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(json_safe(payload), indent=2, sort_keys=True) + "\n")
    return path


@dataclass
class ExperimentConfig:
    manifest: Optional[str] = None
    model_kind: str = "trabs"
    profile: str = "full"
    model: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    inference: dict = field(default_factory=dict)
    output_dir: Optional[str] = None
    seed: int = 0
    cv_folds: int = 5

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        raw = yaml.safe_load(Path(path).read_text()) or {}
        unknown = set(raw) - set(cls.__dataclass_fields__)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        return cls(**raw)

    def validate(self) -> "ExperimentConfig":
        if self.model_kind not in MODEL_KINDS:
            raise UsageError(f"model_kind must be one of {MODEL_KINDS}")
        if self.profile not in ("full", "toy"):
            raise UsageError("profile must be 'full' or 'toy'")
        if self.manifest is not None and not Path(self.manifest).exists():
            raise DataError(f"manifest not found: {self.manifest}")
        return self

    def model_config(self):
        base = toy_config(self.model_kind).to_dict() if self.profile == "toy" else {}
        base.update(self.model)
        return config_from_dict(self.model_kind, base)

    def train_config(self) -> TrainConfig:
        params = dict(self.train)
        params.setdefault("seed", self.seed)
        return toy_train_config(**params) if self.profile == "toy" else TrainConfig(**params)

    def inference_config(self) -> InferenceConfig:
        params = dict(self.inference)
        if self.profile == "toy":
            params.setdefault("window", (8, 64, 64))
        return InferenceConfig(**params)

    def resolved(self) -> dict:
        return {
            "manifest": self.manifest, "model_kind": self.model_kind, "profile": self.profile,
            "model": self.model_config().to_dict(), "train": self.train_config().to_dict(),
            "inference": self.inference_config().to_dict(), "seed": self.seed, "cv_folds": self.cv_folds,
        }


def _experiment(args) -> ExperimentConfig:
    exp = ExperimentConfig.from_file(args.config) if getattr(args, "config", None) else ExperimentConfig()
    for key in ("manifest", "model_kind", "profile", "seed", "cv_folds"):
        val = getattr(args, key, None)
        if val is not None:
            setattr(exp, key, val)
    if getattr(args, "toy", False):
        exp.profile = "toy"
    if getattr(args, "max_epochs", None) is not None:
        exp.train["max_epochs"] = args.max_epochs
    if getattr(args, "patience", None) is not None:
        exp.train["patience_epochs"] = args.patience
    if getattr(args, "no_augment", False):
        exp.train["augment"] = {k: 0.0 for k in ("flip", "affine", "ghosting", "noise", "blur", "bias_field", "gamma")}
    if getattr(args, "no_tta", False):
        exp.inference["tta_flips"] = False
    return exp.validate()


# ---- phantom -----------------------------------------------------------------

def cmd_phantom(args) -> int:
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    out = Path(args.out)
    params = {
        "n": args.n, "seed": args.seed, "density_range": [args.density_lo, args.density_hi],
        "shape": list(args.shape), "noise_sigma": args.noise, "bias_field_strength": args.bias,
    }
    specs = cohort_specs(args.n, args.seed, (args.density_lo, args.density_hi), shape=tuple(args.shape),
                         noise_sigma=args.noise, bias_field_strength=args.bias)
    rows = []
    for i, spec in enumerate(specs):
        case = generate_phantom(spec, case_id=f"phantom{args.seed}-{i:03d}")
        row = save_case(case, out / "cases")
        rows.append({k: f"cases/{v}" if k != "case_id" else v for k, v in row.items()})
    write_manifest(out / "manifest.csv", rows)
    _write_json(out / "phantom.json", {
        "params": params, "seed": args.seed, "config_hash": config_hash(params),
        "cases": [{"case_id": r["case_id"], "target_density": s.target_density,
                   "enhancement_factor": s.enhancement_factor, "seed": s.seed} for r, s in zip(rows, specs)],
    })
    print(out / "manifest.csv")
    return EXIT_OK


# ---- train -------------------------------------------------------------------

def cmd_train(args) -> int:
    exp = _experiment(args)
    if exp.manifest is None:
        raise UsageError("a manifest is required (--manifest or config 'manifest')")
    out = Path(args.out or exp.output_dir or "runs/train")
    set_deterministic()
    records = read_manifest(exp.manifest)
    cases = [r.load() for r in records]
    ids = [c.case_id for c in cases]
    splits = make_cv_splits(ids, k=exp.cv_folds, seed=exp.seed)
    resolved = exp.resolved()
    chash = config_hash(resolved)
    save_splits(splits, out / "splits.json", seed=exp.seed, config_hash=chash)
    _write_json(out / "experiment.json", {"config": resolved, "config_hash": chash, "seed": exp.seed})

    run_folds = splits if args.folds is None else splits[: args.folds]
    failed = []
    for fold in run_folds:
        fold_dir = out / f"fold_{fold.fold_index}"
        if (fold_dir / "manifest.json").exists() and not args.overwrite:
            log.info("fold %d already trained, skipping", fold.fold_index)
            continue
        t0 = time.time()
        try:
            ckpt = train_fold(exp.model_kind, fold, cases, exp.train_config(), exp.model_config())
        except FGTSegError as exc:
            log.error("fold %d failed: %s", fold.fold_index, exc)
            failed.append(fold.fold_index)
            continue
        ckpt.save(fold_dir)
        meta = json.loads((fold_dir / "manifest.json").read_text())
        meta.update(config_hash=chash, train_seconds=round(time.time() - t0, 2))
        _write_json(fold_dir / "manifest.json", meta)
        log.info("fold %d: best val %.4f at epoch %d/%d", fold.fold_index, ckpt.best_val_loss,
                 ckpt.best_epoch, ckpt.epochs_run)
    if failed:
        log.error("folds failed: %s", failed)
        return EXIT_RUNTIME
    return EXIT_OK


# ---- predict -----------------------------------------------------------------

def load_checkpoints(directory) -> list[Checkpoint]:
    dirs = sorted(p for p in Path(directory).glob("fold_*") if (p / "manifest.json").exists())
    if not dirs:
        raise DataError(f"no checkpoints under {directory}")
    return [Checkpoint.load(d) for d in dirs]


def cmd_predict(args) -> int:
    exp = _experiment(args)
    if exp.manifest is None:
        raise UsageError("a manifest is required")
    set_deterministic()
    ckpts = load_checkpoints(args.checkpoints)
    models = [c.build_model() for c in ckpts]
    cfg = exp.inference_config()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    resolved = {"inference": cfg.to_dict(), "checkpoints": str(args.checkpoints), "mode": args.mode,
                "folds": [c.fold_index for c in ckpts]}
    chash = config_hash(resolved)

    failures = []
    rows = []
    for record in read_manifest(exp.manifest):
        t0 = time.time()
        try:
            case = record.load()
            members = models
            if args.mode == "cv":
                members = [m for m, c in zip(models, ckpts) if c.split and case.case_id in c.split["test_ids"]]
                if not members:
                    raise DataError(f"{case.case_id} is not in any fold's test set")
            mask = predict_case(members, case, cfg)
        except Exception as exc:  # per-case failures must not stop the run
            log.error("case %s failed: %s", record.case_id, exc)
            failures.append(record.case_id)
            continue
        name = f"{record.case_id}.nii.gz"
        save_nifti(mask, out / name)
        rows.append({"case_id": record.case_id, "prediction": name})
        _write_json(out / f"{record.case_id}.json", {
            "case_id": record.case_id, "seconds": round(time.time() - t0, 3), "n_models": len(members),
            "config": resolved, "config_hash": chash,
        })
    _write_json(out / "predictions.json", {"config": resolved, "config_hash": chash, "cases": rows,
                                           "failed": failures})
    if failures:
        return EXIT_RUNTIME
    return EXIT_OK


# ---- evaluate / report -------------------------------------------------------

def _load_predictions(directory, ids) -> dict:
    directory = Path(directory)
    preds, missing = {}, []
    for cid in ids:
        path = directory / f"{cid}.nii.gz"
        if path.exists():
            preds[cid] = load_mask(path)
        else:
            missing.append(cid)
    if missing:
        raise MissingCase(missing)
    return preds


def _evaluate(args):
    records = read_manifest(args.manifest)
    cases = [r.load() for r in records]
    ids = [c.case_id for c in cases]
    preds = _load_predictions(args.predictions, ids)
    other = _load_predictions(args.compare, ids) if args.compare else None
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        evals, summary = evaluate_cohort(preds, None, cases, other, seed=args.seed, n_resamples=args.resamples)
    for w in caught:
        log.warning("%s", w.message)
    params = {"manifest": str(args.manifest), "predictions": str(args.predictions),
              "compare": str(args.compare) if args.compare else None, "seed": args.seed,
              "resamples": args.resamples}
    summary.update(seed=args.seed, config_hash=config_hash(params))
    return cases, preds, evals, summary


def cmd_evaluate(args) -> int:
    out = Path(args.out)
    _, _, evals, summary = _evaluate(args)
    write_records(evals, out / "records.csv")
    _write_json(out / "summary.json", summary)
    dsc = summary["dsc"]
    print(f"DSC {dsc['mean']:.3f}±{dsc['std']:.3f} over {summary['n_cases']} cases")
    return EXIT_OK


def cmd_report(args) -> int:
    from .report import density_scatter, error_overlay

    out = Path(args.out)
    cases, preds, evals, summary = _evaluate(args)
    write_records(evals, out / "records.csv")
    _write_json(out / "summary.json", summary)
    _write_json(out / "density_strata.json", {"strata": density_strata(evals), "seed": args.seed,
                                              "config_hash": summary["config_hash"]})
    density_scatter(evals, out / "density_vs_dsc.png")
    for case in cases[: args.overlays]:
        error_overlay(case, preds[case.case_id].data, out / "overlays" / f"{case.case_id}.png")
    return EXIT_OK


# ---- entry -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fgtseg", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    ph = sub.add_parser("phantom", help="write a synthetic cohort as NIfTI + manifest")
    ph.add_argument("--out", required=True)
    ph.add_argument("--n", type=int, default=20)
    ph.add_argument("--seed", type=int, default=0)
    ph.add_argument("--density-lo", type=float, default=0.1)
    ph.add_argument("--density-hi", type=float, default=0.5)
    ph.add_argument("--shape", type=int, nargs=3, default=(8, 64, 128), metavar=("D", "H", "W"))
    ph.add_argument("--noise", type=float, default=5.0)
    ph.add_argument("--bias", type=float, default=0.1)
    ph.set_defaults(func=cmd_phantom)

    def experiment_args(sp):
        sp.add_argument("--config")
        sp.add_argument("--manifest")
        sp.add_argument("--model-kind", dest="model_kind", choices=MODEL_KINDS)
        sp.add_argument("--profile", choices=("full", "toy"))
        sp.add_argument("--toy", action="store_true", help="shorthand for --profile toy")
        sp.add_argument("--seed", type=int)

    tr = sub.add_parser("train", help="k-fold cross-validation training")
    experiment_args(tr)
    tr.add_argument("--out")
    tr.add_argument("--cv-folds", dest="cv_folds", type=int, help="number of cross-validation folds (default 5)")
    tr.add_argument("--folds", type=int, help="train only the first N folds (smoke runs)")
    tr.add_argument("--max-epochs", type=int)
    tr.add_argument("--patience", type=int)
    tr.add_argument("--no-augment", action="store_true")
    tr.add_argument("--overwrite", action="store_true", help="retrain folds that already have a checkpoint")
    tr.set_defaults(func=cmd_train)

    pr = sub.add_parser("predict", help="ensemble prediction for every case of a manifest")
    experiment_args(pr)
    pr.add_argument("--checkpoints", required=True)
    pr.add_argument("--out", required=True)
    pr.add_argument("--mode", choices=("ensemble", "cv"), default="ensemble",
                    help="ensemble: majority vote of all folds; cv: each case by the fold that held it out")
    pr.add_argument("--no-tta", action="store_true")
    pr.set_defaults(func=cmd_predict)

    for name, func, help_ in (("evaluate", cmd_evaluate, "per-case metrics and cohort statistics"),
                              ("report", cmd_report, "evaluate plus density plot and overlays")):
        ev = sub.add_parser(name, help=help_)
        ev.add_argument("--manifest", required=True)
        ev.add_argument("--predictions", required=True)
        ev.add_argument("--compare", help="second prediction directory for paired comparison")
        ev.add_argument("--out", required=True)
        ev.add_argument("--seed", type=int, default=0)
        ev.add_argument("--resamples", type=int, default=10000)
        if name == "report":
            ev.add_argument("--overlays", type=int, default=4, help="number of overlay images")
        ev.set_defaults(func=func)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"fgtseg: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError) as exc:
        print(f"fgtseg: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:
        log.exception("runtime failure")
        print(f"fgtseg: runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
