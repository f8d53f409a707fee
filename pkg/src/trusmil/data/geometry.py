"""Needle-trace geometry in sample coordinates.

The needle ray starts at the frame's probe origin and advances at
``angle`` degrees from the probe axis (row direction). All geometry here
works in sample-index space: the ray length is depth/axial_spacing
samples, the trace width is width/lateral_spacing samples.
"""

import math

import numpy as np

from .types import NeedleGeometry, ProstateMask, RFFrame

# steps per sample unit when rasterizing the center ray
_RAY_OVERSAMPLING = 4


def needle_ray(frame: RFFrame, needle: NeedleGeometry):
    """Return (origin, unit direction, length) of the needle center ray,
    all in sample coordinates (row, col)."""
    theta = math.radians(needle.angle)
    origin = np.asarray(frame.probe_origin, dtype=np.float64)
    direction = np.array([math.cos(theta), math.sin(theta)])
    length = needle.depth / frame.axial_spacing
    return origin, direction, length


def needle_rectangle(frame: RFFrame, needle: NeedleGeometry) -> np.ndarray:
    """Rectangular trace region of the needle, as a 4x2 array of corner
    points (row, col) in sample coordinates, clipped to the frame.

    Corners are ordered: entry-left, entry-right, tip-right, tip-left,
    where "left/right" is perpendicular to the ray direction.

    Raises ValueError if the depth spans less than one axial sample or if
    the needle lies entirely outside the frame.
    """
    origin, u, length = needle_ray(frame, needle)
    if length < 1.0:
        raise ValueError("needle depth spans less than one axial sample")
    half_w = 0.5 * needle.width / frame.lateral_spacing
    n = np.array([-u[1], u[0]])   # left-hand perpendicular

    tip = origin + length * u
    corners = np.stack([
        origin - half_w * n,
        origin + half_w * n,
        tip + half_w * n,
        tip - half_w * n,
    ])

    h, w = frame.shape
    ts = np.linspace(0.0, length, max(2, int(length * _RAY_OVERSAMPLING)))
    centers = origin[None, :] + ts[:, None] * u[None, :]
    inside = (
        (centers[:, 0] >= 0) & (centers[:, 0] <= h - 1)
        & (centers[:, 1] >= 0) & (centers[:, 1] <= w - 1)
    )
    if not inside.any():
        raise ValueError("needle outside frame")

    corners[:, 0] = np.clip(corners[:, 0], 0, h - 1)
    corners[:, 1] = np.clip(corners[:, 1], 0, w - 1)
    return corners


def mask_segment(frame: RFFrame, needle: NeedleGeometry, mask: ProstateMask):
    """Intersect the needle center ray with the prostate mask.

    Returns (t_values, valid) where ``t_values`` are ray parameters in
    sample units rasterized along the full needle length and ``valid``
    flags the positions that fall inside both the frame and the mask.

    Raises ValueError when the intersection is empty.
    """
    if not mask.matches(frame):
        raise ValueError("mask shape must equal frame shape")
    origin, u, length = needle_ray(frame, needle)
    h, w = frame.shape
    ts = np.linspace(0.0, length, max(2, int(length * _RAY_OVERSAMPLING)))
    pts = origin[None, :] + ts[:, None] * u[None, :]
    rows = np.rint(pts[:, 0]).astype(int)
    cols = np.rint(pts[:, 1]).astype(int)
    in_frame = (rows >= 0) & (rows < h) & (cols >= 0) & (cols < w)
    valid = np.zeros_like(in_frame)
    valid[in_frame] = mask.mask[rows[in_frame], cols[in_frame]]
    if not valid.any():
        raise ValueError("no valid ROI region")
    return ts, valid
