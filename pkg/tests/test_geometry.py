import math

import numpy as np
import pytest

from trusmil.data import (
    NeedleGeometry,
    ProstateMask,
    RFFrame,
    extract_roi_grid,
    mask_segment,
    needle_rectangle,
)


def make_frame(h=200, w=200, axial=0.1, lateral=0.5, origin=(0.0, 100.0)):
    return RFFrame(
        samples=np.zeros((h, w)),
        axial_spacing=axial,
        lateral_spacing=lateral,
        probe_origin=origin,
    )


class TestNeedleRectangle:
    def test_axis_aligned(self):
        frame = make_frame()
        needle = NeedleGeometry(angle=0.0, depth=10.0, width=2.0)
        corners = needle_rectangle(frame, needle)
        rows = sorted(set(np.round(corners[:, 0], 6)))
        cols = sorted(set(np.round(corners[:, 1], 6)))
        assert rows == [0.0, 100.0]
        assert cols == [98.0, 102.0]

    def test_rotated_45_matches_rotation_matrix(self):
        # origin away from the frame edge so no corner is clipped
        frame = make_frame(origin=(20.0, 100.0))
        needle = NeedleGeometry(angle=45.0, depth=10.0, width=2.0)
        corners = needle_rectangle(frame, needle)

        theta = math.radians(45.0)
        rot = np.array([[math.cos(theta), -math.sin(theta)],
                        [math.sin(theta), math.cos(theta)]])
        origin = np.array(frame.probe_origin)
        # unrotated layout: ray along +row, half-width 2 samples, length 100
        local = np.array([[0, -2], [0, 2], [100, 2], [100, -2]], dtype=float)
        expected = origin + local @ rot.T
        assert np.allclose(corners, expected, atol=1e-9)
        long_edge = np.linalg.norm(corners[2] - corners[1])
        assert long_edge == pytest.approx(100.0, abs=0.5)

    def test_zero_depth_rejected(self):
        with pytest.raises(ValueError):
            NeedleGeometry(angle=0.0, depth=0.0, width=2.0)

    def test_needle_outside_frame(self):
        frame = make_frame(origin=(-500.0, -500.0))
        needle = NeedleGeometry(angle=0.0, depth=10.0, width=2.0)
        with pytest.raises(ValueError, match="outside frame"):
            needle_rectangle(frame, needle)

    def test_subsample_depth_rejected(self):
        frame = make_frame(axial=1.0)
        needle = NeedleGeometry(angle=0.0, depth=0.5, width=2.0)
        with pytest.raises(ValueError):
            needle_rectangle(frame, needle)

    def test_corners_clipped_to_frame(self):
        frame = make_frame(h=50, w=120)
        needle = NeedleGeometry(angle=0.0, depth=10.0, width=2.0)
        corners = needle_rectangle(frame, needle)
        assert corners[:, 0].max() <= 49.0
        assert corners[:, 1].max() <= 119.0
        assert corners.min() >= 0.0


def make_core_like(mask_array, h=200, w=200, axial=0.1, lateral=0.5):
    from trusmil.data import BiopsyCore

    frame = make_frame(h=h, w=w, axial=axial, lateral=lateral)
    frame.samples[:] = np.random.default_rng(0).standard_normal((h, w))
    return BiopsyCore(
        core_id="T-00",
        patient_id="T",
        center_id="C0",
        label=0,
        involvement=0.0,
        frame=frame,
        needle=NeedleGeometry(angle=0.0, depth=15.0, width=2.0),
        mask=ProstateMask(mask_array),
    )


class TestRoiGrid:
    def test_full_mask_uniform_spacing(self):
        core = make_core_like(np.ones((200, 200), dtype=bool))
        windows = extract_roi_grid(core)
        assert len(windows) == 55
        ts = np.array([w.t for w in windows])
        spacings = np.diff(ts)
        assert np.allclose(spacings, spacings[0], atol=0.5)

    def test_distal_half_mask_halves_spacing(self):
        full = np.ones((200, 200), dtype=bool)
        half = np.zeros((200, 200), dtype=bool)
        half[75:, :] = True   # distal half of the 150-sample needle
        ts_full = np.array([w.t for w in extract_roi_grid(make_core_like(full))])
        ts_half = np.array([w.t for w in extract_roi_grid(make_core_like(half))])

        # oracle: ray is vertical from row 0, so the segment endpoints are
        # the first/last masked rows hit by the ray
        assert ts_half[0] == pytest.approx(75.0, abs=0.5)
        assert ts_half[-1] == pytest.approx(ts_full[-1], abs=0.5)
        ratio = np.diff(ts_half).mean() / np.diff(ts_full).mean()
        assert ratio == pytest.approx(0.5, abs=0.02)

    def test_disjoint_mask_errors(self):
        mask = np.zeros((200, 200), dtype=bool)
        mask[:, :40] = True   # needle runs down column 100
        with pytest.raises(ValueError, match="no valid ROI region"):
            extract_roi_grid(make_core_like(mask))

    def test_centers_inside_mask(self):
        rng = np.random.default_rng(5)
        mask = np.zeros((200, 200), dtype=bool)
        mask[30:170, 60:140] = True
        core = make_core_like(mask)
        for w in extract_roi_grid(core):
            r, c = w.center
            assert mask[int(round(r)), int(round(c))]


def test_mask_segment_requires_matching_shape():
    frame = make_frame()
    needle = NeedleGeometry(angle=0.0, depth=10.0, width=2.0)
    with pytest.raises(ValueError):
        mask_segment(frame, needle, ProstateMask(np.ones((10, 10), dtype=bool)))
