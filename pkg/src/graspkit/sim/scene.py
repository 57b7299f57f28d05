"""Procedural block scenes and orthographic heightmap rendering."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from shapely import affinity, contains_xy
from shapely.geometry import Polygon

from ..geometry import DESK_WORKSPACE, Heightmap, WorkspaceGeometry
from .blocks import BLOCK_SHAPES, N_SHAPES

# Depth storage quantum (0.1 mm): rendering snaps to it so heightmaps
# round-trip bit-exactly through the 16-bit datastore format.
DEPTH_QUANTUM_M = 1e-4

MAX_BLOCKS = 50
SCALE_RANGE = (0.7, 1.3)
MAX_OVERLAP_FRACTION = 0.30
_PLACEMENT_TRIES = 50


@dataclass(frozen=True)
class BlockInstance:
    """One placed block: archetype + in-plane scale, position, yaw."""

    block_id: int
    shape_id: int
    scale: float
    x: float  # meters, column direction
    y: float  # meters, row direction
    yaw: float  # radians

    def polygon(self) -> Polygon:
        base = BLOCK_SHAPES[self.shape_id].footprint
        p = affinity.scale(base, self.scale, self.scale, origin=(0, 0))
        p = affinity.rotate(p, self.yaw, origin=(0, 0), use_radians=True)
        return affinity.translate(p, self.x, self.y)

    @property
    def height(self) -> float:
        return BLOCK_SHAPES[self.shape_id].height


@dataclass(frozen=True)
class SceneSpec:
    """Simulator ground truth: block list + workspace geometry + seed."""

    scene_id: str
    blocks: tuple[BlockInstance, ...]
    workspace: WorkspaceGeometry
    seed: int

    def __post_init__(self):
        if not 0 <= len(self.blocks) <= MAX_BLOCKS:
            raise ValueError(f"scene holds {len(self.blocks)} blocks, limit is {MAX_BLOCKS}")
        side = self.workspace.side_m
        for b in self.blocks:
            if not (0 <= b.x <= side and 0 <= b.y <= side):
                raise ValueError(f"block {b.block_id} center outside the workspace")

    def without_block(self, block_id: int) -> "SceneSpec":
        kept = tuple(b for b in self.blocks if b.block_id != block_id)
        if len(kept) == len(self.blocks):
            raise ValueError(f"no block with id {block_id} in scene {self.scene_id}")
        return replace(self, blocks=kept)


def spawn_scene(
    seed: int,
    n_blocks: int,
    workspace: WorkspaceGeometry = DESK_WORKSPACE,
    scene_id: str | None = None,
) -> SceneSpec:
    """Deterministically spawn ``n_blocks`` random blocks.

    Placement rejection-samples up to 30% footprint overlap against the
    already placed blocks; dense scenes fall back to the least-overlapping
    candidate so the block count is always exact.
    """
    if not 1 <= n_blocks <= MAX_BLOCKS:
        raise ValueError(f"n_blocks must be in [1, {MAX_BLOCKS}], got {n_blocks}")
    rng = np.random.default_rng(np.random.SeedSequence([0x5CE2E, seed]))
    margin = workspace.margin_m
    lo, hi = margin, workspace.side_m - margin
    placed: list[BlockInstance] = []
    union: Polygon | None = None
    for block_id in range(n_blocks):
        shape_id = int(rng.integers(N_SHAPES))
        scale = float(rng.uniform(*SCALE_RANGE))
        yaw = float(rng.uniform(0.0, 2 * math.pi))
        best: tuple[float, BlockInstance] | None = None
        for _ in range(_PLACEMENT_TRIES):
            x, y = rng.uniform(lo, hi), rng.uniform(lo, hi)
            cand = BlockInstance(block_id, shape_id, scale, x, y, yaw)
            poly = cand.polygon()
            overlap = 0.0 if union is None else union.intersection(poly).area / poly.area
            if best is None or overlap < best[0]:
                best = (overlap, cand)
            if overlap <= MAX_OVERLAP_FRACTION:
                break
        assert best is not None
        block = best[1]
        placed.append(block)
        poly = block.polygon()
        union = poly if union is None else union.union(poly)
    sid = scene_id if scene_id is not None else f"s{seed:010d}"
    return SceneSpec(sid, tuple(placed), workspace, seed)


def render_heightmap(scene: SceneSpec) -> Heightmap:
    """Orthographic max-projection of the scene onto the table plane.

    Pixel (r, c) samples the block stack at the pixel center; overlapping
    blocks take the max height. Depths snap to the 0.1 mm storage quantum.
    """
    ws = scene.workspace
    n = ws.side_px
    s = ws.pixel_scale
    out = np.zeros((n, n), dtype=np.float32)
    for block in scene.blocks:
        poly = block.polygon()
        minx, miny, maxx, maxy = poly.bounds
        c0 = max(0, int(math.floor(minx / s - 0.5)))
        c1 = min(n - 1, int(math.ceil(maxx / s - 0.5)))
        r0 = max(0, int(math.floor(miny / s - 0.5)))
        r1 = min(n - 1, int(math.ceil(maxy / s - 0.5)))
        if c1 < c0 or r1 < r0:
            continue
        cols = (np.arange(c0, c1 + 1) + 0.5) * s
        rows = (np.arange(r0, r1 + 1) + 0.5) * s
        xs, ys = np.meshgrid(cols, rows)
        mask = contains_xy(poly, xs.ravel(), ys.ravel()).reshape(xs.shape)
        h = round(block.height / DEPTH_QUANTUM_M) * DEPTH_QUANTUM_M
        region = out[r0 : r1 + 1, c0 : c1 + 1]
        np.maximum(region, np.where(mask, np.float32(h), 0.0), out=region)
    return Heightmap(out, pixel_scale=s, background_level=0.0)


def pixel_to_world(row: float, col: float, workspace: WorkspaceGeometry) -> tuple[float, float]:
    """Pixel-center (row, col) -> workspace (x, y) meters."""
    s = workspace.pixel_scale
    return (col + 0.5) * s, (row + 0.5) * s


def world_to_pixel(x: float, y: float, workspace: WorkspaceGeometry) -> tuple[int, int]:
    """Workspace (x, y) meters -> nearest pixel (row, col)."""
    s = workspace.pixel_scale
    return int(round(y / s - 0.5)), int(round(x / s - 0.5))
