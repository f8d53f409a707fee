"""ROI grid extraction along the needle trace.

Each core yields a fixed number of raw windows whose centers are spaced
uniformly along the needle ray restricted to the prostate mask; windows
may overlap. Raw windows are then resized to 256x256 and normalized to
produce ROIPatch objects.
"""

from dataclasses import dataclass

import numpy as np

from . import geometry
from .preprocess import normalize_rescale, resize_bilinear
from .types import PATCHES_PER_CORE, ROI_GRID_SIZE, BiopsyCore, ROIPatch


@dataclass
class RawWindow:
    """Unprocessed ROI window plus its position along the needle."""

    window: np.ndarray          # [h, w] raw RF samples
    center: tuple[float, float]  # (row, col) sample coords
    t: float                    # ray parameter of the center, sample units
    segment_fraction: float     # position within the needle-mask segment, [0, 1]


def _window_bounds(center: float, half: float, size: int, limit: int):
    """Integer window [lo, hi) of width ``size`` around ``center``,
    shifted to fit inside [0, limit)."""
    lo = int(round(center - half))
    lo = max(0, min(lo, limit - size))
    return lo, lo + size


def extract_roi_grid(
    core: BiopsyCore,
    n_patches: int = PATCHES_PER_CORE,
    roi_mm: float = 5.0,
) -> list[RawWindow]:
    """Extract ``n_patches`` raw windows of physical size roi_mm x roi_mm
    centered uniformly along the needle-mask segment.

    Raises ValueError ("no valid ROI region") when the needle ray does
    not intersect the mask.
    """
    frame = core.frame
    ts, valid = geometry.mask_segment(frame, core.needle, core.mask)
    t_valid = ts[valid]
    t_lo, t_hi = float(t_valid[0]), float(t_valid[-1])

    origin, u, _ = geometry.needle_ray(frame, core.needle)
    centers_t = np.linspace(t_lo, t_hi, n_patches)
    # snap to the nearest rasterized in-mask position (no-op for convex masks)
    snapped = t_valid[np.argmin(np.abs(t_valid[None, :] - centers_t[:, None]), axis=1)]

    h, w = frame.shape
    win_h = max(2, int(round(roi_mm / frame.axial_spacing)))
    win_w = max(2, int(round(roi_mm / frame.lateral_spacing)))
    win_h = min(win_h, h)
    win_w = min(win_w, w)

    span = t_hi - t_lo
    windows = []
    for t in snapped:
        r, c = origin + t * u
        r_lo, r_hi = _window_bounds(r, win_h / 2, win_h, h)
        c_lo, c_hi = _window_bounds(c, win_w / 2, win_w, w)
        frac = 0.0 if span == 0 else (t - t_lo) / span
        windows.append(RawWindow(
            window=frame.samples[r_lo:r_hi, c_lo:c_hi].copy(),
            center=(float(r), float(c)),
            t=float(t),
            segment_fraction=float(frac),
        ))
    return windows


def _in_any_span(frac: float, spans) -> bool:
    return any(lo <= frac <= hi for lo, hi in spans)


def preprocess_core(
    core: BiopsyCore,
    n_patches: int = PATCHES_PER_CORE,
    roi_mm: float = 5.0,
) -> list[ROIPatch]:
    """Full per-core chain: extract raw windows, resize to 256x256,
    normalize/rescale, and attach weak labels (plus per-ROI truth for
    synthetic cores)."""
    raw = extract_roi_grid(core, n_patches=n_patches, roi_mm=roi_mm)
    patches = []
    for i, rw in enumerate(raw):
        pixels = normalize_rescale(resize_bilinear(rw.window, out=ROI_GRID_SIZE))
        truth = None
        if core.cancer_spans is not None:
            truth = int(_in_any_span(rw.segment_fraction, core.cancer_spans))
        patches.append(ROIPatch(
            pixels=pixels.astype(np.float32),
            core_id=core.core_id,
            index_along_needle=i,
            weak_label=core.label,
            synth_truth=truth,
        ))
    return patches
