import numpy as np
import pytest

from fgtseg.errors import DataError
from fgtseg.io import load_cases, load_mask, load_volume, read_manifest, save_case, save_nifti, write_manifest
from fgtseg.volumes import BinaryMask, Volume


def test_volume_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    v = Volume(rng.normal(size=(3, 5, 7)), (3.0, 0.8, 0.7))
    save_nifti(v, tmp_path / "v.nii.gz")
    back = load_volume(tmp_path / "v.nii.gz")
    assert back.shape == (3, 5, 7)
    np.testing.assert_allclose(back.spacing, v.spacing, rtol=1e-6)
    np.testing.assert_allclose(back.data, v.data, rtol=1e-6)


def test_mask_round_trip(tmp_path):
    m = BinaryMask((np.arange(60).reshape(3, 4, 5) % 3 == 0).astype(np.uint8), (2.0, 1.0, 1.0))
    save_nifti(m, tmp_path / "m.nii.gz")
    back = load_mask(tmp_path / "m.nii.gz")
    assert np.array_equal(back.data, m.data)


def test_case_manifest_round_trip(tmp_path, phantom):
    row = save_case(phantom, tmp_path / "cases")
    write_manifest(tmp_path / "manifest.csv", [{k: (f"cases/{v}" if k != "case_id" else v) for k, v in row.items()}])
    (case,) = load_cases(tmp_path / "manifest.csv")
    assert case.case_id == phantom.case_id
    assert np.array_equal(case.fgt_mask.data, phantom.fgt_mask.data)
    np.testing.assert_allclose(case.pre.data, phantom.pre.data, rtol=1e-6)
    assert case.spacing == pytest.approx(phantom.spacing)


def test_missing_manifest(tmp_path):
    with pytest.raises(DataError):
        read_manifest(tmp_path / "nope.csv")


def test_manifest_missing_columns(tmp_path):
    (tmp_path / "m.csv").write_text("case_id,pre\na,b\n")
    with pytest.raises(DataError):
        read_manifest(tmp_path / "m.csv")


def test_duplicate_ids(tmp_path):
    (tmp_path / "m.csv").write_text("case_id,pre,post,breast_mask,fgt_mask\na,x,y,z,\na,x,y,z,\n")
    with pytest.raises(DataError):
        read_manifest(tmp_path / "m.csv")
