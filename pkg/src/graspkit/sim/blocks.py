"""The seven planar block archetypes the simulated world is built from."""

from __future__ import annotations

from dataclasses import dataclass

from shapely.geometry import Point, Polygon


@dataclass(frozen=True)
class BlockShape:
    """Planar footprint archetype in canonical pose (centroid at origin)."""

    shape_id: int
    name: str
    footprint: Polygon
    height: float  # meters; not affected by in-plane scaling

    def __post_init__(self):
        minx, miny, maxx, maxy = self.footprint.bounds
        if max(maxx - minx, maxy - miny) > 0.10 + 1e-9:
            raise ValueError(f"{self.name} footprint exceeds the 0.10 m bounding square")
        if not 0.02 <= self.height <= 0.06:
            raise ValueError(f"{self.name} height {self.height} outside [0.02, 0.06] m")


def _centered(poly: Polygon) -> Polygon:
    c = poly.centroid
    return Polygon([(x - c.x, y - c.y) for x, y in poly.exterior.coords])


def _rect(w: float, h: float) -> Polygon:
    return Polygon([(0, 0), (w, 0), (w, h), (0, h)])


def _l_shape(size: float, arm: float) -> Polygon:
    return Polygon([
        (0, 0), (size, 0), (size, arm), (arm, arm), (arm, size), (0, size),
    ])


def _t_shape(bar_w: float, bar_h: float, stem_w: float, stem_h: float) -> Polygon:
    x0 = (bar_w - stem_w) / 2
    return Polygon([
        (0, 0), (bar_w, 0), (bar_w, bar_h),
        (x0 + stem_w, bar_h), (x0 + stem_w, bar_h + stem_h),
        (x0, bar_h + stem_h), (x0, bar_h), (0, bar_h),
    ])


def _u_shape(outer_w: float, outer_h: float, wall: float) -> Polygon:
    return Polygon([
        (0, 0), (outer_w, 0), (outer_w, outer_h),
        (outer_w - wall, outer_h), (outer_w - wall, wall),
        (wall, wall), (wall, outer_h), (0, outer_h),
    ])


# Sides chosen so that the thin axis of every archetype stays within the
# 85 mm gripper stroke across the simulator's scale range [0.7, 1.3]
# (U blocks are grasped through the channel onto the base wall).
BLOCK_SHAPES: tuple[BlockShape, ...] = (
    BlockShape(0, "square", _centered(_rect(0.055, 0.055)), 0.045),
    BlockShape(1, "rect2", _centered(_rect(0.090, 0.045)), 0.030),
    BlockShape(2, "rect3", _centered(_rect(0.090, 0.030)), 0.025),
    BlockShape(3, "disk", Point(0.0, 0.0).buffer(0.0275, quad_segs=32), 0.035),
    BlockShape(4, "ell", _centered(_l_shape(0.090, 0.032)), 0.030),
    BlockShape(5, "tee", _centered(_t_shape(0.090, 0.030, 0.030, 0.060)), 0.030),
    BlockShape(6, "yu", _centered(_u_shape(0.080, 0.070, 0.025)), 0.035),
)

N_SHAPES = len(BLOCK_SHAPES)
