import math

import pytest
import torch

from fgtseg.augment import AugmentConfig
from fgtseg.errors import ConfigError, DataError, DivergedLoss
from fgtseg.models import toy_config
from fgtseg.phantom import generate_cohort
from fgtseg.splits import make_cv_splits
from fgtseg.training import (
    Checkpoint, EarlyStopping, TrainConfig, prepare_crops, set_deterministic, toy_train_config, train_fold,
    train_model, validation_loss,
)


def _quick(**kw):
    params = dict(max_epochs=2, patience_epochs=5, augment=AugmentConfig.disabled(), batch_size=4)
    params.update(kw)
    return toy_train_config(**params)


@pytest.fixture(scope="module")
def cohort():
    return generate_cohort(3, seed=2)


class TestEarlyStopping:
    def test_arithmetic(self):
        stopper = EarlyStopping(30)
        losses = [1.0, 0.9, 0.8, 0.7, 0.6] + [0.6] * 100
        stopped = None
        for epoch, loss in enumerate(losses, start=1):
            stopper.update(epoch, loss)
            if stopper.should_stop(epoch):
                stopped = epoch
                break
        assert stopped == 35 and stopper.best_epoch == 5

    def test_strict_improvement(self):
        stopper = EarlyStopping(2)
        assert stopper.update(1, 1.0)
        assert not stopper.update(2, 1.0)
        assert stopper.best_epoch == 1

    def test_bad_patience(self):
        with pytest.raises(ValueError):
            TrainConfig(patience_epochs=0)


def test_window_must_fit_downsampling(cohort):
    with pytest.raises(ConfigError):
        train_model("trabs", toy_config("trabs"), cohort[:1], cohort[1:2], _quick(window=(8, 60, 64)))


def test_missing_fgt_rejected(cohort):
    from dataclasses import replace

    bare = replace(cohort[0], fgt_mask=None)
    with pytest.raises(DataError):
        prepare_crops([bare])


def test_deterministic_traces(cohort):
    set_deterministic(True)
    runs = [train_model("baseline", toy_config("baseline"), cohort[:2], cohort[2:], _quick(seed=3)) for _ in range(2)]
    assert runs[0].history == runs[1].history
    for k in runs[0].state_dict:
        assert torch.equal(runs[0].state_dict[k], runs[1].state_dict[k])


def test_returns_best_weights(cohort):
    ckpt = train_model("baseline", toy_config("baseline"), cohort[:2], cohort[2:], _quick(max_epochs=4))
    best = min(r["val_loss"] for r in ckpt.history)
    assert ckpt.best_val_loss == best
    assert ckpt.history[ckpt.best_epoch - 1]["val_loss"] == best
    val = validation_loss(ckpt.build_model(), prepare_crops(cohort[2:]), (8, 64, 64))
    assert val == pytest.approx(best, abs=1e-6)


def test_diverged_loss(cohort, monkeypatch):
    import fgtseg.training as training

    real = training.multiscale_loss
    monkeypatch.setattr(training, "multiscale_loss", lambda out, y: real(out, y) * math.nan)
    with pytest.raises(DivergedLoss):
        train_model("baseline", toy_config("baseline"), cohort[:2], cohort[2:], _quick())


def test_checkpoint_round_trip(tmp_path, cohort):
    fold = make_cv_splits([c.case_id for c in cohort], k=3, seed=0)[0]
    ckpt = train_fold("baseline", fold, cohort, _quick(max_epochs=1), toy_config("baseline"))
    ckpt.save(tmp_path / "fold_0")
    assert {p.name for p in (tmp_path / "fold_0").iterdir()} == {"weights.pt", "manifest.json", "history.csv"}
    back = Checkpoint.load(tmp_path / "fold_0")
    assert back.manifest() == ckpt.manifest()
    assert back.history == ckpt.history
    x = torch.randn(1, 2, 8, 32, 32)
    with torch.no_grad():
        assert torch.equal(back.build_model()(x).main_logits, ckpt.build_model()(x).main_logits)
    assert back.split["test_ids"] == list(fold.test_ids)


def test_on_epoch_callback(cohort):
    seen = []
    train_model("baseline", toy_config("baseline"), cohort[:1], cohort[1:2], _quick(max_epochs=2), on_epoch=seen.append)
    assert [r["epoch"] for r in seen] == [1, 2]


def test_unknown_fold_ids(cohort):
    fold = make_cv_splits(["a", "b", "c", "d", "e"], k=5)[0]
    with pytest.raises(DataError):
        train_fold("baseline", fold, cohort, _quick())
