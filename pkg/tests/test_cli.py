import json
import shutil

import jsonschema
import pytest
import yaml

from fgtseg.cli import config_hash, main
from fgtseg.evaluation import SUMMARY_SCHEMA
from fgtseg.io import load_cases


def _phantoms(tmp_path, n=10, seed=7, name="data"):
    out = tmp_path / name
    assert main(["phantom", "--out", str(out), "--n", str(n), "--seed", str(seed)]) == 0
    return out


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    """Ten phantoms, five toy folds of one epoch each."""
    tmp = tmp_path_factory.mktemp("cli")
    data = _phantoms(tmp)
    run = tmp / "run"
    code = main(["train", "--manifest", str(data / "manifest.csv"), "--toy", "--model-kind", "baseline",
                 "--max-epochs", "1", "--no-augment", "--out", str(run)])
    assert code == 0
    return data, run


class TestPhantom:
    def test_byte_identical(self, tmp_path):
        a = _phantoms(tmp_path, n=3, name="a")
        b = _phantoms(tmp_path, n=3, name="b")
        assert (a / "manifest.csv").read_bytes() == (b / "manifest.csv").read_bytes()
        assert (a / "phantom.json").read_bytes() == (b / "phantom.json").read_bytes()

    def test_zero_cases_usage_error(self, tmp_path):
        assert main(["phantom", "--out", str(tmp_path), "--n", "0"]) == 1

    def test_loads_without_warnings(self, tmp_path, recwarn):
        data = _phantoms(tmp_path, n=2)
        cases = load_cases(data / "manifest.csv")
        assert len(cases) == 2 and len(recwarn) == 0

    def test_metadata_carries_seed_and_hash(self, tmp_path):
        meta = json.loads((_phantoms(tmp_path, n=2) / "phantom.json").read_text())
        assert meta["seed"] == 7 and meta["config_hash"] == config_hash(meta["params"])


def test_usage_errors():
    with pytest.raises(SystemExit) as exc:
        main(["nonsense"])
    assert exc.value.code == 1
    assert main(["train", "--toy"]) == 1


def test_missing_manifest_is_data_error(tmp_path):
    assert main(["train", "--manifest", str(tmp_path / "none.csv"), "--toy"]) == 2


def test_bad_config_key(tmp_path):
    (tmp_path / "c.yaml").write_text("unknown_key: 1\n")
    assert main(["train", "--config", str(tmp_path / "c.yaml")]) == 1


class TestTrain:
    def test_five_folds_and_split_record(self, trained):
        data, run = trained
        assert sorted(p.name for p in run.glob("fold_*")) == [f"fold_{i}" for i in range(5)]
        record = json.loads((run / "splits.json").read_text())
        test_ids = [i for f in record["folds"] for i in f["test_ids"]]
        ids = [c.case_id for c in load_cases(data / "manifest.csv")]
        assert sorted(test_ids) == sorted(ids)
        assert record["seed"] == 0 and "config_hash" in record

    def test_manifest_fields(self, trained):
        meta = json.loads((trained[1] / "fold_0" / "manifest.json").read_text())
        for key in ("model_config", "seed", "epochs_run", "best_val_loss", "config_hash"):
            assert key in meta

    def test_resume_and_identical_splits(self, trained, tmp_path):
        data, run = trained
        before = (run / "splits.json").read_bytes()
        weights = (run / "fold_0" / "weights.pt").stat().st_mtime_ns
        code = main(["train", "--manifest", str(data / "manifest.csv"), "--toy", "--model-kind", "baseline",
                     "--max-epochs", "1", "--no-augment", "--out", str(run)])
        assert code == 0
        assert (run / "splits.json").read_bytes() == before
        assert (run / "fold_0" / "weights.pt").stat().st_mtime_ns == weights

    def test_smoke_single_fold_from_config(self, trained, tmp_path):
        data, _ = trained
        cfg = {"manifest": str(data / "manifest.csv"), "model_kind": "baseline", "profile": "toy",
               "train": {"max_epochs": 1}, "seed": 1}
        (tmp_path / "exp.yaml").write_text(yaml.safe_dump(cfg))
        out = tmp_path / "smoke"
        assert main(["train", "--config", str(tmp_path / "exp.yaml"), "--folds", "1", "--out", str(out)]) == 0
        assert [p.name for p in out.glob("fold_*")] == ["fold_0"]
        assert json.loads((out / "experiment.json").read_text())["seed"] == 1


class TestPredictEvaluate:
    def test_compose(self, trained, tmp_path):
        data, run = trained
        pred = tmp_path / "pred"
        assert main(["predict", "--manifest", str(data / "manifest.csv"), "--toy", "--checkpoints", str(run),
                     "--out", str(pred), "--no-tta"]) == 0
        per_case = json.loads(next(pred.glob("phantom7-*.json")).read_text())
        assert per_case["n_models"] == 5 and "seconds" in per_case and "config_hash" in per_case

        ev = tmp_path / "eval"
        assert main(["evaluate", "--manifest", str(data / "manifest.csv"), "--predictions", str(pred),
                     "--out", str(ev), "--resamples", "200"]) == 0
        summary = json.loads((ev / "summary.json").read_text())
        jsonschema.validate(summary, SUMMARY_SCHEMA)
        assert summary["n_cases"] == 10 and summary["seed"] == 0

    def test_cv_mode_uses_held_out_fold(self, trained, tmp_path):
        data, run = trained
        pred = tmp_path / "cv"
        assert main(["predict", "--manifest", str(data / "manifest.csv"), "--toy", "--checkpoints", str(run),
                     "--out", str(pred), "--no-tta", "--mode", "cv"]) == 0
        per_case = json.loads(next(pred.glob("phantom7-*.json")).read_text())
        assert per_case["n_models"] == 1

    def test_ground_truth_copy_and_identical_compare(self, trained, tmp_path):
        data, _ = trained
        gt = tmp_path / "gt"
        gt.mkdir()
        for f in (data / "cases").glob("*_fgt_mask.nii.gz"):
            shutil.copy(f, gt / f.name.replace("_fgt_mask", ""))
        ev = tmp_path / "ev"
        assert main(["evaluate", "--manifest", str(data / "manifest.csv"), "--predictions", str(gt),
                     "--compare", str(gt), "--out", str(ev), "--resamples", "200"]) == 0
        summary = json.loads((ev / "summary.json").read_text())
        assert summary["dsc"]["mean"] == 1.0 and summary["dsc"]["std"] == 0.0
        assert summary["comparison"]["p_dsc"] == 1.0

    def test_missing_predictions(self, trained, tmp_path, capsys):
        data, _ = trained
        (tmp_path / "empty").mkdir()
        code = main(["evaluate", "--manifest", str(data / "manifest.csv"), "--predictions",
                     str(tmp_path / "empty"), "--out", str(tmp_path / "e")])
        assert code == 2
        assert "phantom7-000" in capsys.readouterr().err

    def test_failed_case_continues(self, trained, tmp_path):
        data, run = trained
        broken = tmp_path / "broken"
        shutil.copytree(data, broken)
        victim = next((broken / "cases").glob("*-000_pre.nii.gz"))
        victim.write_bytes(b"not nifti")
        pred = tmp_path / "p"
        code = main(["predict", "--manifest", str(broken / "manifest.csv"), "--toy", "--checkpoints", str(run),
                     "--out", str(pred), "--no-tta"])
        assert code == 3
        assert len(list(pred.glob("*.nii.gz"))) == 9
        assert json.loads((pred / "predictions.json").read_text())["failed"] == ["phantom7-000"]

    def test_report(self, trained, tmp_path):
        data, _ = trained
        gt = tmp_path / "gt"
        gt.mkdir()
        for f in (data / "cases").glob("*_fgt_mask.nii.gz"):
            shutil.copy(f, gt / f.name.replace("_fgt_mask", ""))
        out = tmp_path / "rep"
        assert main(["report", "--manifest", str(data / "manifest.csv"), "--predictions", str(gt),
                     "--out", str(out), "--resamples", "100", "--overlays", "2"]) == 0
        assert (out / "density_vs_dsc.png").stat().st_size > 0
        assert len(list((out / "overlays").glob("*.png"))) == 2
        strata = json.loads((out / "density_strata.json").read_text())
        assert sum(s["n"] for s in strata["strata"]) == 10
