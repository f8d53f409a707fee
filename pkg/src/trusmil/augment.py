"""Stochastic two-view augmentation for self-supervised pre-training.

Views are produced by rotation/scale warping, random area crops resized
back to 256, optional horizontal flip and gamma intensity distortion.
Magnitudes are conservative for ultrasound; flips default off because
needle-trace geometry is orientation-meaningful.
"""

import math
from dataclasses import dataclass

import numpy as np

from .data.preprocess import bilinear_sample, resize_bilinear
from .data.types import ROI_GRID_SIZE


@dataclass
class AugmentationPolicy:
    rotation_range: float = 10.0                 # degrees, +/- range
    scale_range: tuple[float, float] = (0.8, 1.2)
    crop_area_range: tuple[float, float] = (0.7, 1.0)
    gamma_range: tuple[float, float] = (0.8, 1.25)
    flip_prob: float = 0.0

    def __post_init__(self):
        if self.rotation_range < 0:
            raise ValueError("rotation_range must be nonnegative")
        for name in ("scale_range", "crop_area_range", "gamma_range"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise ValueError(f"{name} must be an increasing positive interval")
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ValueError("flip_prob must lie in [0, 1]")

    @classmethod
    def identity(cls) -> "AugmentationPolicy":
        """All ranges collapsed so augmentation becomes a no-op."""
        return cls(rotation_range=0.0, scale_range=(1.0, 1.0),
                   crop_area_range=(1.0, 1.0), gamma_range=(1.0, 1.0),
                   flip_prob=0.0)


def _warp(image: np.ndarray, angle_deg: float, scale: float) -> np.ndarray:
    """Rotate by angle and zoom by scale about the image center
    (inverse mapping, bilinear, edge replication)."""
    h, w = image.shape
    theta = math.radians(angle_deg)
    cr, cc = (h - 1) / 2.0, (w - 1) / 2.0
    rows, cols = np.mgrid[0:h, 0:w].astype(np.float64)
    dr = rows - cr
    dc = cols - cc
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    src_r = (cos_t * dr - sin_t * dc) / scale + cr
    src_c = (sin_t * dr + cos_t * dc) / scale + cc
    return bilinear_sample(image, src_r, src_c)


def _augment_once(x: np.ndarray, policy: AugmentationPolicy, rng: np.random.Generator) -> np.ndarray:
    size = x.shape[0]
    # draw all parameters first so the stream never depends on the data
    angle = rng.uniform(-policy.rotation_range, policy.rotation_range)
    scale = rng.uniform(*policy.scale_range)
    area = rng.uniform(*policy.crop_area_range)
    side = int(round(size * math.sqrt(area)))
    side = max(2, min(side, size))
    top = int(rng.integers(0, size - side + 1))
    left = int(rng.integers(0, size - side + 1))
    flip = rng.random() < policy.flip_prob
    gamma = rng.uniform(*policy.gamma_range)

    out = x.astype(np.float64)
    if angle != 0.0 or scale != 1.0:
        out = _warp(out, angle, scale)
    if side < size:
        out = resize_bilinear(out[top:top + side, left:left + side], out=size)
    if flip:
        out = out[:, ::-1]
    if gamma != 1.0:
        out = np.power(np.clip(out, 0.0, 1.0), gamma)
    return np.clip(out, 0.0, 1.0)


def augment_pair(x: np.ndarray, policy: AugmentationPolicy, seed: int):
    """Two independent stochastic views of ``x``; deterministic per
    (x, policy, seed). Views keep the input shape (256x256 in the
    pipeline) and stay clamped to [0, 1]."""
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[0] != x.shape[1] or x.shape[0] < 2:
        raise ValueError(f"input must be a square image, got {x.shape}")
    rng = np.random.default_rng(seed)
    return _augment_once(x, policy, rng), _augment_once(x, policy, rng)
