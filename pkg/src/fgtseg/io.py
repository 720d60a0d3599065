"""NIfTI volume IO and the case manifest.

NIfTI arrays are stored (x, y, z) = (width, height, depth); in memory we use
(depth, height, width), so reads and writes transpose and reverse the zooms.

The manifest is a CSV with one case per row and columns
``case_id, pre, post, breast_mask, fgt_mask``. Paths are relative to the
manifest's directory; ``fgt_mask`` may be empty at inference time.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import nibabel as nib
import numpy as np

from .errors import DataError
from .volumes import BinaryMask, Case, Volume

MANIFEST_FIELDS = ("case_id", "pre", "post", "breast_mask", "fgt_mask")


def _read(path: Path) -> tuple[np.ndarray, tuple[float, float, float]]:
    if not path.exists():
        raise DataError(f"missing file: {path}")
    img = nib.load(str(path))
    data = np.asarray(img.dataobj)
    if data.ndim == 4 and data.shape[3] == 1:
        data = data[..., 0]
    if data.ndim != 3:
        raise DataError(f"{path}: expected a 3D image, got shape {data.shape}")
    zooms = tuple(float(z) for z in img.header.get_zooms()[:3])
    return np.transpose(data, (2, 1, 0)), zooms[::-1]


def load_volume(path, identifier: Optional[str] = None) -> Volume:
    path = Path(path)
    data, spacing = _read(path)
    return Volume(data.astype(np.float64), spacing, identifier or path.name)


def load_mask(path, identifier: Optional[str] = None) -> BinaryMask:
    path = Path(path)
    data, spacing = _read(path)
    if not np.all((data == 0) | (data == 1)):
        raise DataError(f"{path}: mask has values outside {{0, 1}}")
    return BinaryMask(data.astype(np.uint8), spacing, identifier or path.name)


def save_nifti(obj: Volume | BinaryMask, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(obj, BinaryMask):
        data = obj.data.astype(np.uint8)
    else:
        data = obj.data.astype(np.float32)
    arr = np.ascontiguousarray(np.transpose(data, (2, 1, 0)))
    affine = np.diag(list(obj.spacing[::-1]) + [1.0])
    img = nib.Nifti1Image(arr, affine)
    img.header.set_zooms(obj.spacing[::-1])
    # Fixed header fields keep repeated writes byte-identical.
    img.header["descrip"] = b"fgtseg"
    nib.save(img, str(path))
    return path


@dataclass(frozen=True)
class ManifestRecord:
    case_id: str
    pre: Path
    post: Path
    breast_mask: Path
    fgt_mask: Optional[Path] = None

    def load(self) -> Case:
        return Case(
            case_id=self.case_id,
            pre=load_volume(self.pre, f"{self.case_id}-pre"),
            post=load_volume(self.post, f"{self.case_id}-post"),
            breast_mask=load_mask(self.breast_mask, f"{self.case_id}-breast"),
            fgt_mask=load_mask(self.fgt_mask, f"{self.case_id}-fgt") if self.fgt_mask else None,
        )


def read_manifest(path) -> list[ManifestRecord]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"manifest not found: {path}")
    base = path.parent
    records = []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(MANIFEST_FIELDS[:4]) - set(reader.fieldnames or ())
        if missing:
            raise DataError(f"{path}: manifest lacks columns {sorted(missing)}")
        for row in reader:
            fgt = (row.get("fgt_mask") or "").strip()
            records.append(ManifestRecord(
                case_id=row["case_id"],
                pre=base / row["pre"],
                post=base / row["post"],
                breast_mask=base / row["breast_mask"],
                fgt_mask=base / fgt if fgt else None,
            ))
    ids = [r.case_id for r in records]
    if len(set(ids)) != len(ids):
        raise DataError(f"{path}: duplicate case ids")
    return records


def write_manifest(path, rows: list[dict]) -> Path:
    """Write manifest rows; path values should already be relative to the manifest directory."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=MANIFEST_FIELDS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k) or "" for k in MANIFEST_FIELDS})
    return path


def save_case(case: Case, directory) -> dict:
    """Write a case's volumes as NIfTI under ``directory`` and return its manifest row."""
    directory = Path(directory)
    row = {"case_id": case.case_id}
    parts = {"pre": case.pre, "post": case.post, "breast_mask": case.breast_mask, "fgt_mask": case.fgt_mask}
    for key, obj in parts.items():
        if obj is None:
            continue
        name = f"{case.case_id}_{key}.nii.gz"
        save_nifti(obj, directory / name)
        row[key] = name
    return row


def load_cases(manifest) -> list[Case]:
    return [r.load() for r in read_manifest(manifest)]
