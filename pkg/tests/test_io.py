import json

import numpy as np
import pytest

from trusmil.data import (
    SynthConfig,
    load_core,
    load_core_meta,
    load_core_rois,
    load_manifest,
    preprocess_core,
    read_tensor,
    save_dataset,
    synth_generate,
    write_tensor,
)


@pytest.fixture(scope="module")
def small_dataset(tmp_path_factory):
    cfg = SynthConfig(n_patients=3, cancer_core_rate=0.5, seed=5,
                      frame_shape=(64, 64), axial_spacing=0.35,
                      lateral_spacing=0.35)
    cores = synth_generate(cfg)
    out = tmp_path_factory.mktemp("dataset")
    save_dataset(cores, out)
    return cores, out


def test_tensor_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    for shape in [(4,), (3, 5), (2, 3, 4)]:
        x = rng.standard_normal(shape).astype(np.float32)
        write_tensor(tmp_path / "t.bin", x)
        assert np.array_equal(read_tensor(tmp_path / "t.bin"), x)


def test_tensor_rejects_garbage(tmp_path):
    (tmp_path / "bad.bin").write_bytes(b"not a tensor")
    with pytest.raises(ValueError):
        read_tensor(tmp_path / "bad.bin")


def test_manifest_lists_every_core(small_dataset):
    cores, out = small_dataset
    manifest = load_manifest(out)
    assert manifest["n_cores"] == len(cores)
    listed = {e["core_id"] for e in manifest["cores"]}
    assert listed == {c.core_id for c in cores}
    for entry in manifest["cores"]:
        assert (out / entry["path"] / "core.json").exists()


def test_sidecar_contents(small_dataset):
    cores, out = small_dataset
    core = cores[0]
    meta = load_core_meta(out, core.core_id)
    assert meta["patient_id"] == core.patient_id
    assert meta["center_id"] == core.center_id
    assert meta["label"] == core.label
    assert meta["involvement"] == core.involvement
    assert meta["needle"]["depth"] == core.needle.depth
    assert meta["extraction"]["n_patches"] == 55
    assert len(meta["files"]["rois"]) == 55
    assert len(meta["synth_truth"]) == 55


def test_roi_stack_shape_and_range(small_dataset):
    cores, out = small_dataset
    rois = load_core_rois(out, cores[0].core_id)
    assert rois.shape == (55, 256, 256)
    assert rois.min() >= 0.0 and rois.max() <= 1.0


def test_reload_and_reextract_reproduces_rois(small_dataset):
    # stored patches come from the same pure pipeline, so re-extracting
    # from the reloaded core reproduces them (up to float32 storage)
    cores, out = small_dataset
    core = load_core(out, cores[0].core_id)
    fresh = preprocess_core(core)
    stored = load_core_rois(out, cores[0].core_id)
    assert np.allclose(np.stack([p.pixels for p in fresh]), stored, atol=1e-5)


def test_extraction_is_pure(small_dataset):
    cores, _ = small_dataset
    a = preprocess_core(cores[0])
    b = preprocess_core(cores[0])
    assert all(np.array_equal(x.pixels, y.pixels) for x, y in zip(a, b))


def test_missing_manifest_raises(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_manifest(tmp_path)
