import math

import numpy as np
import pytest

from graspkit.geometry import AngleGrid, Heightmap, WorkspaceGeometry
from graspkit.pseudolabel import (
    PseudoLabelConfig,
    best_grasp,
    generate_pseudo_labels,
    sample_angles,
    top_n_grasps,
)

GRID = AngleGrid(64)
WS64 = WorkspaceGeometry(side_px=64)


def blank64():
    return Heightmap(np.zeros((64, 64), dtype=np.float32), WS64.pixel_scale)


class VolumeStub:
    """Dense scorer emitting a fixed (H, W) map per angle index."""

    def __init__(self, maps_by_angle, default=0.0, size=64):
        self.maps = maps_by_angle  # {angle: np (H, W)}
        self.default = default
        self.size = size

    def forward_angles(self, x, angles, compiled=False, batch_size=16):
        out = []
        for a in angles:
            key = min(self.maps, key=lambda m: abs(m - float(a))) if self.maps else None
            if key is not None and abs(key - float(a)) < 1e-9:
                out.append(self.maps[key])
            else:
                out.append(np.full((self.size, self.size), self.default))
        return np.stack(out)


def exhaustive_scan(x, model, angles, ws, grid=GRID):
    """Independent oracle: python scan over every (angle, row, col) cell."""
    stack = model.forward_angles(x, angles)
    lo, hi = ws.margin_px, ws.side_px - ws.margin_px
    best = None
    for k in range(len(angles)):
        for r in range(lo, hi):
            for c in range(lo, hi):
                v = stack[k, r, c]
                if best is None or v > best[0]:
                    best = (v, grid.nearest_index(float(angles[k])), r, c)
    return best


class TestSampleAngles:
    def test_full_grid(self):
        out = sample_angles(64, GRID, np.random.default_rng(0))
        assert np.allclose(out, GRID.angles())

    def test_single(self):
        out = sample_angles(1, GRID, np.random.default_rng(1))
        assert len(out) == 1 and out[0] in GRID.angles()

    def test_distinct_grid_members(self):
        out = sample_angles(16, GRID, np.random.default_rng(2))
        assert len(set(out)) == 16
        assert all(any(math.isclose(a, g) for g in GRID.angles()) for a in out)

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            sample_angles(0, GRID, np.random.default_rng(0))
        with pytest.raises(ValueError):
            sample_angles(65, GRID, np.random.default_rng(0))


class TestBestGrasp:
    def test_delta_argmax(self):
        v = np.zeros((64, 64))
        v[30, 40] = 10.0
        phi0 = GRID.angle(12)
        stub = VolumeStub({phi0: v})
        got = best_grasp(blank64(), stub, [GRID.angle(4), phi0], workspace=WS64)
        assert (got.grasp.row, got.grasp.col, got.grasp.angle_index) == (30, 40, 12)
        assert got.score == 10.0

    def test_constant_model_tie_break(self):
        stub = VolumeStub({}, default=1.0)
        got = best_grasp(blank64(), stub, [GRID.angle(2), GRID.angle(9)], workspace=WS64)
        m = WS64.margin_px
        assert (got.grasp.row, got.grasp.col) == (m, m)
        assert got.grasp.angle_index == 2  # lowest angle index wins ties

    def test_margins_excluded(self):
        v = np.zeros((64, 64))
        v[0, 0] = 99.0  # inside the margin: must be ignored
        v[20, 20] = 5.0
        stub = VolumeStub({GRID.angle(0): v})
        got = best_grasp(blank64(), stub, [GRID.angle(0)], workspace=WS64)
        assert (got.grasp.row, got.grasp.col) == (20, 20)

    def test_matches_exhaustive_scan(self):
        rng = np.random.default_rng(5)
        for trial in range(3):
            angles = sample_angles(8, GRID, rng)
            maps = {float(a): rng.normal(size=(64, 64)) for a in angles}
            stub = VolumeStub(maps)
            got = best_grasp(blank64(), stub, angles, workspace=WS64)
            v, k, r, c = exhaustive_scan(blank64(), stub, angles, WS64)
            assert (got.grasp.angle_index, got.grasp.row, got.grasp.col) == (k, r, c)
            assert got.score == pytest.approx(v)

    def test_angle_slice_order_invariance(self):
        rng = np.random.default_rng(8)
        angles = list(sample_angles(6, GRID, rng))
        maps = {float(a): rng.normal(size=(64, 64)) for a in angles}
        stub = VolumeStub(maps)
        a = best_grasp(blank64(), stub, angles, workspace=WS64)
        b = best_grasp(blank64(), stub, angles[::-1], workspace=WS64)
        assert a.grasp == b.grasp


class TestTopN:
    def test_n1_equals_best(self):
        rng = np.random.default_rng(9)
        angles = sample_angles(4, GRID, rng)
        maps = {float(a): rng.normal(size=(64, 64)) for a in angles}
        stub = VolumeStub(maps)
        top = top_n_grasps(blank64(), stub, angles, 1, 6, workspace=WS64)
        best = best_grasp(blank64(), stub, angles, workspace=WS64)
        assert top == [best]

    def test_two_far_peaks_both_returned(self):
        v = np.zeros((64, 64))
        v[15, 15] = 10.0
        v[45, 45] = 9.0  # ~42 px away, beyond the 12 px ban
        stub = VolumeStub({GRID.angle(0): v})
        top = top_n_grasps(blank64(), stub, [GRID.angle(0)], 2, 12, workspace=WS64)
        assert [(t.grasp.row, t.grasp.col) for t in top] == [(15, 15), (45, 45)]

    def test_near_peak_banned(self):
        v = np.zeros((64, 64))
        v[30, 30] = 10.0
        v[30, 36] = 9.0  # 6 px away: banned by radius 12
        v[45, 45] = 1.0
        stub = VolumeStub({GRID.angle(0): v})
        top = top_n_grasps(blank64(), stub, [GRID.angle(0)], 2, 12, workspace=WS64)
        assert [(t.grasp.row, t.grasp.col) for t in top] == [(30, 30), (45, 45)]

    def test_scores_monotone(self):
        rng = np.random.default_rng(10)
        angles = sample_angles(4, GRID, rng)
        maps = {float(a): rng.normal(size=(64, 64)) for a in angles}
        top = top_n_grasps(blank64(), VolumeStub(maps), angles, 5, 8, workspace=WS64)
        scores = [t.score for t in top]
        assert scores == sorted(scores, reverse=True)

    def test_pairwise_distance_exceeds_ban(self):
        rng = np.random.default_rng(11)
        maps = {GRID.angle(0): rng.normal(size=(64, 64))}
        top = top_n_grasps(blank64(), VolumeStub(maps), [GRID.angle(0)], 6, 10, workspace=WS64)
        for i in range(len(top)):
            for j in range(i + 1, len(top)):
                d = math.hypot(
                    top[i].grasp.row - top[j].grasp.row,
                    top[i].grasp.col - top[j].grasp.col,
                )
                assert d > 10

    def test_exhaustion_returns_fewer(self):
        stub = VolumeStub({}, default=1.0)
        # radius large enough that one ban covers the whole graspable region
        top = top_n_grasps(blank64(), stub, [GRID.angle(0)], 5, 100, workspace=WS64)
        assert len(top) == 1


class TestGeneratePseudoLabels:
    def test_one_record_per_scene(self):
        scenes = {f"u{i:03d}": blank64() for i in range(7)}
        stub = VolumeStub({}, default=1.0)
        recs = generate_pseudo_labels(
            scenes, stub, PseudoLabelConfig(k_angles=4, ban_radius_px=6), seed=0, workspace=WS64
        )
        assert len(recs) == 7
        assert {r.scene_id for r in recs} == set(scenes)
        assert all(r.outcome and r.provenance == "pseudo" for r in recs)

    def test_grasps_inside_graspable_region(self):
        rng = np.random.default_rng(12)
        scenes = {f"u{i}": blank64() for i in range(4)}
        maps = {float(a): rng.normal(size=(64, 64)) for a in GRID.angles()}
        stub = VolumeStub(maps)
        recs = generate_pseudo_labels(
            scenes, stub, PseudoLabelConfig(k_angles=16, ban_radius_px=6), seed=1, workspace=WS64
        )
        for r in recs:
            assert WS64.contains_grasp(r.grasp.row, r.grasp.col)

    def test_full_grid_matches_brute_force(self):
        rng = np.random.default_rng(13)
        maps = {float(a): rng.normal(size=(64, 64)) for a in GRID.angles()}
        stub = VolumeStub(maps)
        scenes = {"only": blank64()}
        recs = generate_pseudo_labels(
            scenes, stub, PseudoLabelConfig(k_angles=64, ban_radius_px=6), seed=5, workspace=WS64
        )
        v, k, r, c = exhaustive_scan(blank64(), stub, GRID.angles(), WS64)
        assert (recs[0].grasp.angle_index, recs[0].grasp.row, recs[0].grasp.col) == (k, r, c)

    def test_determinism(self):
        rng = np.random.default_rng(14)
        maps = {float(a): rng.normal(size=(64, 64)) for a in GRID.angles()}
        stub = VolumeStub(maps)
        scenes = {f"u{i}": blank64() for i in range(5)}
        cfg = PseudoLabelConfig(k_angles=8, ban_radius_px=6)
        a = generate_pseudo_labels(scenes, stub, cfg, seed=3, workspace=WS64)
        b = generate_pseudo_labels(scenes, stub, cfg, seed=3, workspace=WS64)
        assert a == b

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            generate_pseudo_labels({}, VolumeStub({}), PseudoLabelConfig(), seed=0)
