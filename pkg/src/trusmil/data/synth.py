"""Synthetic micro-ultrasound dataset generator.

Frames are colored-noise speckle fields; cancer cores carry an
along-needle segment of length involvement x (sampled needle length)
whose texture follows the cancer parameters. The generator records the
segment so per-ROI ground truth stays available for verification.
"""

import math

import numpy as np

from ..seeding import derive_seed
from . import geometry
from .types import (
    BiopsyCore,
    NeedleGeometry,
    ProstateMask,
    RFFrame,
    SynthConfig,
    TextureParams,
)


def synth_texture(shape: tuple[int, int], params: TextureParams, rng: np.random.Generator) -> np.ndarray:
    """Colored-noise RF texture with multiplicative speckle.

    White noise is shaped with a 1/f^slope spectral filter, normalized to
    unit std, multiplied by a Rayleigh-like speckle envelope of the given
    cell scale, then scaled to the target variance.
    """
    h, w = shape
    fr = np.fft.fftfreq(h)[:, None]
    fc = np.fft.fftfreq(w)[None, :]
    f = np.hypot(fr, fc)
    f[0, 0] = f.flat[np.flatnonzero(f)[0]] if (f > 0).any() else 1.0

    spectrum = np.fft.fft2(rng.standard_normal(shape))
    colored = np.fft.ifft2(spectrum * f ** (-params.spectral_slope)).real
    colored -= colored.mean()
    colored /= colored.std() + 1e-12

    # speckle envelope: magnitude of a low-pass complex field
    field = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    lowpass = np.exp(-0.5 * (f * params.speckle_scale * 2.0 * math.pi) ** 2)
    envelope = np.abs(np.fft.ifft2(np.fft.fft2(field) * lowpass))
    envelope /= envelope.mean() + 1e-12

    return math.sqrt(params.variance) * colored * envelope


def _elliptical_mask(shape: tuple[int, int], rng: np.random.Generator) -> np.ndarray:
    """Prostate-like elliptical mask with jittered center and axes."""
    h, w = shape
    cr = h * rng.uniform(0.48, 0.56)
    cc = w * rng.uniform(0.46, 0.54)
    ar = h * rng.uniform(0.38, 0.46)
    ac = w * rng.uniform(0.36, 0.46)
    rr, cc_grid = np.mgrid[0:h, 0:w]
    return ((rr - cr) / ar) ** 2 + ((cc_grid - cc) / ac) ** 2 <= 1.0


def _paint_band(frame: np.ndarray, origin, u, t_lo, t_hi, half_width, texture):
    """Replace frame samples with ``texture`` inside the band of points
    whose ray projection lies in [t_lo, t_hi] and whose perpendicular
    distance to the ray is at most half_width."""
    h, w = frame.shape
    rr, cc = np.mgrid[0:h, 0:w]
    dr = rr - origin[0]
    dc = cc - origin[1]
    proj = dr * u[0] + dc * u[1]
    perp = np.abs(-dr * u[1] + dc * u[0])
    band = (proj >= t_lo) & (proj <= t_hi) & (perp <= half_width)
    frame[band] = texture[band]


def _make_core(core_id, patient_id, center_id, config: SynthConfig, rng: np.random.Generator) -> BiopsyCore:
    h, w = config.frame_shape
    samples = synth_texture((h, w), config.benign_texture, rng)

    angle = rng.uniform(-config.max_needle_angle, config.max_needle_angle)
    origin = (0.0, w / 2.0 + rng.uniform(-0.05, 0.05) * w)
    # depth chosen so the needle tip stays inside the frame with margin
    margin = max(4.0, 5.0 / config.axial_spacing / 2.0)
    max_rows = (h - 1 - margin) / math.cos(math.radians(angle))
    depth_mm = rng.uniform(0.75, 0.95) * max_rows * config.axial_spacing
    needle = NeedleGeometry(angle=angle, depth=depth_mm, width=config.needle_width)

    mask = ProstateMask(_elliptical_mask((h, w), rng))

    frame = RFFrame(
        samples=samples,
        axial_spacing=config.axial_spacing,
        lateral_spacing=config.lateral_spacing,
        probe_origin=origin,
    )

    label = int(rng.random() < config.cancer_core_rate)
    involvement = 0.0
    spans: list[tuple[float, float]] = []
    if label == 1:
        involvement = float(rng.uniform(*config.involvement_range))
        ts, valid = geometry.mask_segment(frame, needle, mask)
        t_valid = ts[valid]
        t_lo, t_hi = float(t_valid[0]), float(t_valid[-1])
        start = rng.uniform(0.0, 1.0 - involvement)
        spans = [(start, start + involvement)]

        cancer_tex = synth_texture((h, w), config.cancer_texture, rng)
        half_band = 1.2 * max(
            5.0 / config.axial_spacing, 5.0 / config.lateral_spacing
        ) / 2.0  # covers the 5 mm ROI windows around the ray
        ray_origin, u, _ = geometry.needle_ray(frame, needle)
        for lo, hi in spans:
            _paint_band(
                frame.samples, ray_origin, u,
                t_lo + lo * (t_hi - t_lo), t_lo + hi * (t_hi - t_lo),
                half_band, cancer_tex,
            )

    return BiopsyCore(
        core_id=core_id,
        patient_id=patient_id,
        center_id=center_id,
        label=label,
        involvement=involvement,
        frame=frame,
        needle=needle,
        mask=mask,
        cancer_spans=spans,
    )


def synth_generate(config: SynthConfig) -> list[BiopsyCore]:
    """Generate a deterministic synthetic dataset of biopsy cores.

    Patients are assigned to centers round-robin, so per-center patient
    counts differ by at most one. Per-core RNG streams are derived from
    the config seed, making the output bit-identical across runs.
    """
    cores = []
    for p in range(config.n_patients):
        patient_id = f"P{p:04d}"
        center_id = f"C{p % config.n_centers}"
        for c in range(config.cores_per_patient):
            core_id = f"{patient_id}-{c:02d}"
            rng = np.random.default_rng(derive_seed(config.seed, "core", p, c))
            cores.append(_make_core(core_id, patient_id, center_id, config, rng))
    return cores
