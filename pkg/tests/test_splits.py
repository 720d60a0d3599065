import pytest

from fgtseg.errors import TooFewCases
from fgtseg.splits import FoldSplit, load_splits, make_cv_splits, save_splits


def _ids(n):
    return [f"case{i:03d}" for i in range(n)]


def test_ten_ids_five_folds():
    splits = make_cv_splits(_ids(10), k=5, seed=0)
    assert [len(s.test_ids) for s in splits] == [2] * 5
    assert sorted(i for s in splits for i in s.test_ids) == _ids(10)


def test_two_hundred_ids_counts():
    for s in make_cv_splits(_ids(200), k=5, seed=0):
        assert (len(s.test_ids), len(s.train_ids), len(s.val_ids)) == (40, 128, 32)


def test_deterministic():
    assert make_cv_splits(_ids(20), seed=4) == make_cv_splits(_ids(20), seed=4)
    assert make_cv_splits(_ids(20), seed=4) != make_cv_splits(_ids(20), seed=5)


@pytest.mark.parametrize("n", [5, 7, 20, 33])
def test_disjoint_and_complete(n):
    for s in make_cv_splits(_ids(n), k=5, seed=1):
        train, val, test = set(s.train_ids), set(s.val_ids), set(s.test_ids)
        assert not (train & val) and not (train & test) and not (val & test)
        assert train | val | test == set(_ids(n))
        assert val


def test_too_few():
    with pytest.raises(TooFewCases):
        make_cv_splits(_ids(4), k=5)


def test_round_trip(tmp_path):
    splits = make_cv_splits(_ids(12), k=3, seed=2)
    save_splits(splits, tmp_path / "s.json", seed=2)
    assert load_splits(tmp_path / "s.json") == splits
    assert FoldSplit.from_dict(splits[0].to_dict()) == splits[0]
