"""On-disk dataset layout.

A dataset directory holds one subdirectory per core with:

* ``frame.bin``  -- raw RF frame (binary tensor, see below)
* ``mask.bin``   -- prostate mask as 0/1 float tensor
* ``roi_###.bin`` -- one file per extracted 256x256 ROI
* ``core.json``  -- sidecar: ids, label, involvement, geometry, extraction

plus a top-level ``manifest.json`` listing every core.

Binary tensor files are little-endian float32, row-major, preceded by a
shape header: magic ``TNSR``, uint32 ndim, then ndim uint32 dims.
"""

import json
import struct
from pathlib import Path

import numpy as np

from .extract import preprocess_core
from .types import (
    PATCHES_PER_CORE,
    BiopsyCore,
    NeedleGeometry,
    ProstateMask,
    RFFrame,
)

_MAGIC = b"TNSR"
MANIFEST_NAME = "manifest.json"


def write_tensor(path, array: np.ndarray) -> None:
    array = np.ascontiguousarray(array, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", array.ndim))
        fh.write(struct.pack(f"<{array.ndim}I", *array.shape))
        fh.write(array.tobytes())


def read_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a tensor file")
        (ndim,) = struct.unpack("<I", fh.read(4))
        shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
        data = np.frombuffer(fh.read(), dtype="<f4").copy()
    if data.size != int(np.prod(shape)):
        raise ValueError(f"{path}: truncated tensor file")
    return data.reshape(shape)


def _core_sidecar(core: BiopsyCore, patches, n_patches, roi_mm) -> dict:
    return {
        "core_id": core.core_id,
        "patient_id": core.patient_id,
        "center_id": core.center_id,
        "label": core.label,
        "involvement": core.involvement,
        "needle": {
            "angle": core.needle.angle,
            "depth": core.needle.depth,
            "width": core.needle.width,
        },
        "frame": {
            "axial_spacing": core.frame.axial_spacing,
            "lateral_spacing": core.frame.lateral_spacing,
            "probe_origin": list(core.frame.probe_origin),
            "shape": list(core.frame.shape),
        },
        "extraction": {"n_patches": n_patches, "roi_mm": roi_mm},
        "cancer_spans": core.cancer_spans,
        "synth_truth": None if core.cancer_spans is None
        else [p.synth_truth for p in patches],
        "files": {
            "frame": "frame.bin",
            "mask": "mask.bin",
            "rois": [f"roi_{i:03d}.bin" for i in range(len(patches))],
        },
    }


def save_dataset(
    cores: list[BiopsyCore],
    out_dir,
    n_patches: int = PATCHES_PER_CORE,
    roi_mm: float = 5.0,
) -> Path:
    """Extract ROIs from every core and write the dataset directory.

    Returns the manifest path.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for core in cores:
        patches = preprocess_core(core, n_patches=n_patches, roi_mm=roi_mm)
        core_dir = out_dir / "cores" / core.core_id
        core_dir.mkdir(parents=True, exist_ok=True)
        write_tensor(core_dir / "frame.bin", core.frame.samples)
        write_tensor(core_dir / "mask.bin", core.mask.mask.astype(np.float32))
        for i, patch in enumerate(patches):
            write_tensor(core_dir / f"roi_{i:03d}.bin", patch.pixels)
        sidecar = _core_sidecar(core, patches, n_patches, roi_mm)
        (core_dir / "core.json").write_text(json.dumps(sidecar, indent=1))
        entries.append({
            "core_id": core.core_id,
            "patient_id": core.patient_id,
            "center_id": core.center_id,
            "label": core.label,
            "involvement": core.involvement,
            "path": str(Path("cores") / core.core_id),
        })
    manifest = {"version": 1, "n_cores": len(entries), "cores": entries}
    manifest_path = out_dir / MANIFEST_NAME
    manifest_path.write_text(json.dumps(manifest, indent=1))
    return manifest_path


def load_manifest(dataset_dir) -> dict:
    path = Path(dataset_dir) / MANIFEST_NAME
    if not path.exists():
        raise FileNotFoundError(f"no dataset manifest at {path}")
    return json.loads(path.read_text())


def load_core_meta(dataset_dir, core_id: str) -> dict:
    return json.loads((Path(dataset_dir) / "cores" / core_id / "core.json").read_text())


def load_core_rois(dataset_dir, core_id: str) -> np.ndarray:
    """Stack of preprocessed ROI patches for one core, [n, 256, 256]."""
    core_dir = Path(dataset_dir) / "cores" / core_id
    meta = json.loads((core_dir / "core.json").read_text())
    rois = [read_tensor(core_dir / name) for name in meta["files"]["rois"]]
    return np.stack(rois).astype(np.float32)


def load_core(dataset_dir, core_id: str) -> BiopsyCore:
    """Rebuild a BiopsyCore (frame, mask, geometry) from its directory."""
    core_dir = Path(dataset_dir) / "cores" / core_id
    meta = json.loads((core_dir / "core.json").read_text())
    frame = RFFrame(
        samples=read_tensor(core_dir / meta["files"]["frame"]).astype(np.float64),
        axial_spacing=meta["frame"]["axial_spacing"],
        lateral_spacing=meta["frame"]["lateral_spacing"],
        probe_origin=tuple(meta["frame"]["probe_origin"]),
    )
    mask = ProstateMask(read_tensor(core_dir / meta["files"]["mask"]) > 0.5)
    spans = meta["cancer_spans"]
    return BiopsyCore(
        core_id=meta["core_id"],
        patient_id=meta["patient_id"],
        center_id=meta["center_id"],
        label=meta["label"],
        involvement=meta["involvement"],
        frame=frame,
        needle=NeedleGeometry(**meta["needle"]),
        mask=mask,
        cancer_spans=None if spans is None else [tuple(s) for s in spans],
    )
