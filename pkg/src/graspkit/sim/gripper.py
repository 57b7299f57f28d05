"""Deterministic antipodal grasp execution against scene ground truth.

Physics is replaced by a three-clause geometric rule evaluated on exact
block polygons plus the rendered heightmap:

  (c) finger footprints at the open positions must not cover any pixel
      higher than the grasp height;
  (a) the closing segment must cross exactly one block taller than the
      grasp height;
  (b) that block's extent along the closing line must fit the stroke with
      finger clearance.

Violations are reported in the order c, a-multi, a-none, b.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from shapely import contains_xy
from shapely.geometry import LineString, Polygon

from ..geometry import AngleGrid, Grasp, Heightmap, WorkspaceGeometry
from .scene import SceneSpec, pixel_to_world, render_heightmap

_NATIVE_PX = 0.45 / 338  # meters per pixel of the native 338-px workspace

DESCENT_OFFSET_M = 0.005
EMPTY_DEPTH_TOL_M = 0.002
EMPTY_FRACTION = 0.98


@dataclass(frozen=True)
class GripperSpec:
    """Two-finger parallel-jaw gripper; sizes in meters.

    Defaults correspond to 10 px wide x 4 px thick fingers and a 64 px
    stroke on the native 338-px workspace.
    """

    stroke_m: float = 0.085
    finger_width_m: float = 10 * _NATIVE_PX
    finger_thickness_m: float = 4 * _NATIVE_PX

    def stroke_px(self, pixel_scale: float) -> int:
        return round(self.stroke_m / pixel_scale)

    def thickness_px(self, pixel_scale: float) -> int:
        return max(1, round(self.finger_thickness_m / pixel_scale))


DEFAULT_GRIPPER = GripperSpec()


@dataclass(frozen=True)
class GraspOutcome:
    success: bool
    failure_reason: str | None = None
    removed_block_id: int | None = None

    def __post_init__(self):
        if self.success != (self.removed_block_id is not None):
            raise ValueError("success must coincide with a removed block id")


def grasp_height(x: Heightmap, row: int, col: int) -> float:
    """Gripper descent height: mean of the 3x3 patch minus 5 mm, floored."""
    n = x.side_px
    if not (1 <= row < n - 1 and 1 <= col < n - 1):
        raise ValueError(f"grasp ({row}, {col}) too close to the border for a 3x3 patch")
    patch = x.values[row - 1 : row + 2, col - 1 : col + 2]
    return max(float(patch.mean()) - DESCENT_OFFSET_M, x.background_level)


def is_empty(x: Heightmap, workspace: WorkspaceGeometry) -> bool:
    """True when >= 98% of graspable-region pixels sit at the background."""
    sl = workspace.graspable_slice
    region = x.values[sl, sl]
    near_bg = np.abs(region - x.background_level) <= EMPTY_DEPTH_TOL_M
    return near_bg.mean() >= EMPTY_FRACTION


def _finger_polygon(cx: float, cy: float, d: np.ndarray, gripper: GripperSpec) -> Polygon:
    """Finger footprint rectangle centered at (cx, cy), thin side along d."""
    n = np.array([-d[1], d[0]])
    half_t, half_w = gripper.finger_thickness_m / 2, gripper.finger_width_m / 2
    c = np.array([cx, cy])
    corners = [
        c - half_t * d - half_w * n,
        c + half_t * d - half_w * n,
        c + half_t * d + half_w * n,
        c - half_t * d + half_w * n,
    ]
    return Polygon(corners)


def _pixels_above(
    x: Heightmap, poly: Polygon, h: float, exempt: list[Polygon] = ()
) -> bool:
    """Does any pixel whose center lies in poly rise above height h?

    Pixels covered by an ``exempt`` polygon (candidate grasp targets,
    judged by the width clause instead) are ignored.
    """
    n = x.side_px
    s = x.pixel_scale
    minx, miny, maxx, maxy = poly.bounds
    c0 = max(0, int(math.floor(minx / s - 0.5)))
    c1 = min(n - 1, int(math.ceil(maxx / s - 0.5)))
    r0 = max(0, int(math.floor(miny / s - 0.5)))
    r1 = min(n - 1, int(math.ceil(maxy / s - 0.5)))
    if c1 < c0 or r1 < r0:
        return False
    cols = (np.arange(c0, c1 + 1) + 0.5) * s
    rows = (np.arange(r0, r1 + 1) + 0.5) * s
    xs, ys = np.meshgrid(cols, rows)
    inside = contains_xy(poly, xs.ravel(), ys.ravel()).reshape(xs.shape)
    for ex in exempt:
        inside &= ~contains_xy(ex, xs.ravel(), ys.ravel()).reshape(xs.shape)
    heights = x.values[r0 : r1 + 1, c0 : c1 + 1]
    return bool((heights[inside] > h).any())


def _extent_along_line(poly: Polygon, p: np.ndarray, d: np.ndarray) -> float:
    """Extent of poly along the infinite line through p with direction d."""
    span = LineString([p - 2.0 * d, p + 2.0 * d])  # 4 m: longer than any block
    inter = span.intersection(poly)
    if inter.is_empty:
        return 0.0
    coords = []
    for geom in getattr(inter, "geoms", [inter]):
        coords.extend(geom.coords)
    t = np.array([(np.array(c[:2]) - p) @ d for c in coords])
    return float(t.max() - t.min())


def execute_grasp(
    scene: SceneSpec,
    grasp: Grasp,
    grid: AngleGrid = AngleGrid(),
    gripper: GripperSpec = DEFAULT_GRIPPER,
    heightmap: Heightmap | None = None,
) -> tuple[GraspOutcome, SceneSpec]:
    """Execute a grasp; on success return the scene with the block removed.

    ``heightmap`` may pass a pre-rendered view of ``scene`` to avoid a
    redundant render; outcomes are identical either way.
    """
    ws = scene.workspace
    if not ws.contains_grasp(grasp.row, grasp.col):
        raise ValueError(
            f"grasp ({grasp.row}, {grasp.col}) outside the graspable region"
        )
    grasp.validate(ws.side_px, grid)
    x = heightmap if heightmap is not None else render_heightmap(scene)
    h = grasp_height(x, grasp.row, grasp.col)
    phi = grid.angle(grasp.angle_index)
    d = np.array([math.cos(phi), math.sin(phi)])  # (x, y) closing axis
    p = np.array(pixel_to_world(grasp.row, grasp.col, ws))
    s = ws.pixel_scale
    half_stroke = gripper.stroke_px(s) * s / 2.0

    segment = LineString([p - half_stroke * d, p + half_stroke * d])
    polys = {b.block_id: b.polygon() for b in scene.blocks}
    touching = [b for b in scene.blocks if segment.intersects(polys[b.block_id])]
    tall = [b for b in touching if b.height > h]

    # Clause (c): fingers at the segment ends must descend through free
    # space. Candidate targets (tall blocks on the closing segment) are
    # exempt here; their size is judged by the width clause.
    exempt = [polys[b.block_id] for b in tall]
    for end in (p - half_stroke * d, p + half_stroke * d):
        if _pixels_above(x, _finger_polygon(end[0], end[1], d, gripper), h, exempt):
            return GraspOutcome(False, "finger_collision"), scene
    if len(tall) > 1:
        return GraspOutcome(False, "multi_object"), scene
    if len(tall) == 0:
        reason = "no_object" if not touching else "empty_pinch"
        return GraspOutcome(False, reason), scene

    # Clause (b): the block must fit between the fingers with clearance.
    target = tall[0]
    max_extent = (gripper.stroke_px(s) - gripper.thickness_px(s)) * s
    if _extent_along_line(polys[target.block_id], p, d) > max_extent:
        return GraspOutcome(False, "too_wide"), scene

    outcome = GraspOutcome(True, None, target.block_id)
    return outcome, scene.without_block(target.block_id)
