"""Data model, synthetic generation, ROI extraction and preprocessing."""

from .extract import RawWindow, extract_roi_grid, preprocess_core
from .geometry import mask_segment, needle_ray, needle_rectangle
from .io import (
    load_core,
    load_core_meta,
    load_core_rois,
    load_manifest,
    read_tensor,
    save_dataset,
    write_tensor,
)
from .preprocess import bilinear_sample, normalize_rescale, resize_bilinear, standardize
from .synth import synth_generate, synth_texture
from .types import (
    PATCHES_PER_CORE,
    ROI_GRID_SIZE,
    BiopsyCore,
    NeedleGeometry,
    ProstateMask,
    RFFrame,
    ROIPatch,
    SynthConfig,
    TextureParams,
)

__all__ = [
    "BiopsyCore", "NeedleGeometry", "ProstateMask", "RFFrame", "ROIPatch",
    "SynthConfig", "TextureParams", "RawWindow",
    "PATCHES_PER_CORE", "ROI_GRID_SIZE",
    "needle_rectangle", "needle_ray", "mask_segment",
    "extract_roi_grid", "preprocess_core",
    "resize_bilinear", "normalize_rescale", "standardize", "bilinear_sample",
    "synth_generate", "synth_texture",
    "save_dataset", "load_manifest", "load_core", "load_core_meta",
    "load_core_rois", "read_tensor", "write_tensor",
]
