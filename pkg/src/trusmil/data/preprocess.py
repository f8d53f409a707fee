"""ROI window preprocessing: align-corners bilinear resize and
instance normalization followed by min-max rescale to [0, 1]."""

import numpy as np

STD_EPS = 1e-8
RANGE_EPS = 1e-12


def bilinear_sample(image: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Sample ``image`` at fractional (rows, cols) with bilinear weights.

    Coordinates are clamped to the image border, so out-of-range samples
    replicate edge values. ``rows`` and ``cols`` must broadcast together.
    """
    image = np.asarray(image, dtype=np.float64)
    h, w = image.shape
    r = np.clip(rows, 0.0, h - 1.0)
    c = np.clip(cols, 0.0, w - 1.0)
    r0 = np.floor(r).astype(int)
    c0 = np.floor(c).astype(int)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    fr = r - r0
    fc = c - c0
    top = image[r0, c0] * (1 - fc) + image[r0, c1] * fc
    bot = image[r1, c0] * (1 - fc) + image[r1, c1] * fc
    return top * (1 - fr) + bot * fr


def resize_bilinear(window: np.ndarray, out: int = 256) -> np.ndarray:
    """Resize a 2-D window to ``out`` x ``out`` with align-corners bilinear
    interpolation; the four corner values are preserved exactly."""
    window = np.asarray(window, dtype=np.float64)
    if window.ndim != 2:
        raise ValueError("window must be 2-D")
    h, w = window.shape
    if h < 2 or w < 2:
        raise ValueError("window must be at least 2x2")
    rows = np.linspace(0.0, h - 1.0, out)
    cols = np.linspace(0.0, w - 1.0, out)
    return bilinear_sample(window, rows[:, None], cols[None, :])


def standardize(window: np.ndarray) -> np.ndarray:
    """Instance normalization: subtract the window mean and divide by the
    population (N-denominator) standard deviation."""
    window = np.asarray(window, dtype=np.float64)
    if not np.isfinite(window).all():
        raise ValueError("window contains non-finite values")
    centered = window - window.mean()
    centered -= centered.mean()   # second pass kills the rounding residual
    return centered / (centered.std() + STD_EPS)


def normalize_rescale(window: np.ndarray) -> np.ndarray:
    """Instance-normalize then min-max rescale a window into [0, 1].
    Constant windows map to all zeros."""
    z = standardize(window)
    return (z - z.min()) / (z.max() - z.min() + RANGE_EPS)
