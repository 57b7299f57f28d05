"""Planar grasp domain types: heightmaps, the angle grid, and center rotations.

Conventions used across the package:

* A heightmap is a square H x W grid of depth in meters above the table
  plane, row index down, column index right.
* Grasp angles live on a uniform grid of [0, pi); the closing axis of a
  grasp at angle ``phi`` points along ``(d_row, d_col) = (sin phi, cos phi)``,
  so ``phi = 0`` closes horizontally (along columns).
* ``rotate_map(x, phi)`` moves content so that a grasp whose closing axis
  is at angle ``phi`` in ``x`` becomes horizontal in the rotated image.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import ndimage

# Normalization ceiling in meters: above the tallest block stack the
# simulator can produce.
DEPTH_NORM_MAX_M = 0.30

# Sensor noise floor below the table plane tolerated by Heightmap.
SENSOR_FLOOR_M = 0.002

PROVENANCES = ("human", "robot", "pseudo", "oracle")


@dataclass(frozen=True)
class Heightmap:
    """Square top-down depth image in meters above the table plane."""

    values: np.ndarray
    pixel_scale: float = 0.45 / 338
    background_level: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32)
        object.__setattr__(self, "values", v)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError(f"heightmap must be square, got shape {v.shape}")
        if not np.isfinite(v).all():
            raise ValueError("heightmap contains non-finite values")
        if (v < self.background_level - SENSOR_FLOOR_M).any():
            raise ValueError("heightmap dips below the sensor noise floor")

    @property
    def side_px(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class AngleGrid:
    """Uniform grid of ``size`` angles covering [0, pi)."""

    size: int = 64

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("angle grid needs at least one angle")

    def angle(self, k: int) -> float:
        if not 0 <= k < self.size:
            raise ValueError(f"angle index {k} outside [0, {self.size})")
        return k * math.pi / self.size

    def angles(self) -> np.ndarray:
        return np.arange(self.size) * (math.pi / self.size)

    def nearest_index(self, phi: float) -> int:
        k = int(round((phi % math.pi) * self.size / math.pi))
        return k % self.size


def circular_distance(a: float, b: float) -> float:
    """Distance between grasp angles, identifying phi with phi + pi."""
    d = abs(a - b) % math.pi
    return min(d, math.pi - d)


@dataclass(frozen=True)
class Grasp:
    """A grasp on the discretized SE(2) grid: pixel position + angle index."""

    row: int
    col: int
    angle_index: int

    def validate(self, side_px: int, grid: AngleGrid) -> None:
        if not (0 <= self.row < side_px and 0 <= self.col < side_px):
            raise ValueError(f"grasp ({self.row}, {self.col}) outside {side_px}px grid")
        if not 0 <= self.angle_index < grid.size:
            raise ValueError(f"angle index {self.angle_index} outside grid of {grid.size}")


@dataclass(frozen=True)
class GraspRecord:
    """One (scene, grasp, outcome) triple with a provenance tag."""

    scene_id: str
    grasp: Grasp
    outcome: bool
    provenance: str

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")


@dataclass(frozen=True)
class WorkspaceGeometry:
    """Square workspace with no-grasp collision margins.

    All physical sizes are in meters; pixel quantities derive from
    ``side_px``. The 338-px default reproduces the native geometry
    (margin 45 px, graspable 248 px, stroke 64 px).
    """

    side_m: float = 0.45
    side_px: int = 338
    margin_m: float = 0.06
    stroke_m: float = 0.085

    @property
    def pixel_scale(self) -> float:
        return self.side_m / self.side_px

    @property
    def margin_px(self) -> int:
        return round(self.margin_m / self.pixel_scale)

    @property
    def graspable_px(self) -> int:
        return self.side_px - 2 * self.margin_px

    @property
    def stroke_px(self) -> int:
        return round(self.stroke_m / self.pixel_scale)

    @property
    def graspable_slice(self) -> slice:
        """Row/col slice of the region the gripper may grasp in."""
        return slice(self.margin_px, self.side_px - self.margin_px)

    def contains_grasp(self, row: int, col: int) -> bool:
        lo, hi = self.margin_px, self.side_px - self.margin_px
        return lo <= row < hi and lo <= col < hi


DESK_WORKSPACE = WorkspaceGeometry(side_px=128)
NATIVE_WORKSPACE = WorkspaceGeometry()


def workspace_for(x: Heightmap) -> WorkspaceGeometry:
    """Workspace geometry implied by a heightmap's size and pixel scale."""
    return WorkspaceGeometry(side_m=x.side_px * x.pixel_scale, side_px=x.side_px)


class RotatedPoint(NamedTuple):
    row: int
    col: int
    in_bounds: bool


def _rotation_matrix(phi: float) -> np.ndarray:
    """Rotation applied to (row, col) offsets from the grid center."""
    c, s = math.cos(phi), math.sin(phi)
    return np.array([[c, -s], [s, c]], dtype=np.float64)


def rotate_map(x: Heightmap, phi: float) -> Heightmap:
    """Rotate a heightmap by ``phi`` about the grid center.

    Bilinear interpolation; pixels that leave the frame are filled with
    the background level. ``rotate_map(x, 0)`` is bit-identical to ``x``.
    """
    v = x.values
    if v.shape[0] != v.shape[1]:
        raise ValueError("rotate_map requires a square heightmap")
    if phi % (2 * math.pi) == 0.0:
        return x
    h = v.shape[0]
    center = (h - 1) / 2.0
    # output[o] = input[R(-phi) @ (o - c) + c]
    m = _rotation_matrix(-phi)
    offset = np.array([center, center]) - m @ np.array([center, center])
    out = ndimage.affine_transform(
        v.astype(np.float64),
        m,
        offset=offset,
        order=1,
        mode="constant",
        cval=x.background_level,
    )
    # Interpolation can undershoot the sensor floor by a hair; clip to it.
    floor = x.background_level - SENSOR_FLOOR_M
    np.clip(out, floor, None, out=out)
    return Heightmap(out.astype(np.float32), x.pixel_scale, x.background_level)


def rotate_point(row: float, col: float, phi: float, side_px: int) -> RotatedPoint:
    """Coordinates of (row, col) in the frame of ``rotate_map(x, phi)``.

    A label placed at the returned pixel on the rotated map marks the same
    physical location the input pixel marks on the original map. Rounded to
    the nearest pixel; ``in_bounds`` is False when the point leaves the frame.
    """
    center = (side_px - 1) / 2.0
    d = np.array([row - center, col - center], dtype=np.float64)
    r, c = _rotation_matrix(phi) @ d + center
    ri, ci = int(round(r)), int(round(c))
    inside = 0 <= ri < side_px and 0 <= ci < side_px
    return RotatedPoint(ri, ci, inside)


def normalize_depth(x: Heightmap) -> np.ndarray:
    """Map depth to [0, 1] against the fixed 0.30 m ceiling."""
    v = (x.values - x.background_level) / DEPTH_NORM_MAX_M
    return np.clip(v, 0.0, 1.0).astype(np.float32)


def distant_angle(phi: float, grid: AngleGrid, rng: np.random.Generator) -> float:
    """Draw a grid angle whose circular distance to ``phi`` is >= pi/4."""
    angles = grid.angles()
    d = np.abs(angles - phi) % math.pi
    d = np.minimum(d, math.pi - d)
    candidates = angles[d >= math.pi / 4 - 1e-12]
    if len(candidates) == 0:
        raise ValueError(f"no grid angle is distant from {phi} on a grid of {grid.size}")
    return float(rng.choice(candidates))
