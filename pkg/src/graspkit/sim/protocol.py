"""Epoch protocol, synthetic annotators, and experience collection.

A policy is any callable ``(heightmap, scene, rng) -> Grasp``. Model
policies ignore the scene ground truth; the oracle annotator ignores the
heightmap. ``as_policy`` adapts plain ``heightmap -> Grasp`` functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np

from ..geometry import AngleGrid, Grasp, GraspRecord, Heightmap
from .gripper import DEFAULT_GRIPPER, GripperSpec, execute_grasp, is_empty
from .scene import SceneSpec, render_heightmap, spawn_scene, world_to_pixel

MAX_CONSECUTIVE_FAILURES = 5
DEPLOYMENT_ANGLE_COUNT = 16

# Synthetic-human jitter: 3 px position at the native 338-px scale, pi/32 angle.
ANNOTATOR_POS_SIGMA_M = 3 * (0.45 / 338)
ANNOTATOR_ANGLE_SIGMA = math.pi / 32


class Policy(Protocol):
    def __call__(
        self, x: Heightmap, scene: SceneSpec, rng: np.random.Generator
    ) -> Grasp: ...


def as_policy(fn: Callable[[Heightmap], Grasp]) -> Policy:
    """Adapt a heightmap-only policy to the rollout signature."""

    def wrapped(x: Heightmap, scene: SceneSpec, rng: np.random.Generator) -> Grasp:
        return fn(x)

    return wrapped


def deployment_angle_indices(grid: AngleGrid, count: int = DEPLOYMENT_ANGLE_COUNT) -> np.ndarray:
    """The fixed uniform subgrid of angle indices used at deployment time."""
    if grid.size % count != 0:
        raise ValueError(f"{count} angles do not evenly subsample a grid of {grid.size}")
    return np.arange(0, grid.size, grid.size // count)


def _snap_to_deployment_grid(phi: float, grid: AngleGrid) -> int:
    """Snap an angle to the nearest deployment angle, as a full-grid index."""
    count = DEPLOYMENT_ANGLE_COUNT
    k = int(round((phi % math.pi) * count / math.pi)) % count
    return k * (grid.size // count)


def _min_width_angle(poly, px: float, py: float, grid: AngleGrid) -> float:
    """Deployment angle whose closing-line chord through (px, py) is shortest.

    The chord along the closing axis is exactly the width the jaws must
    span, so its minimizer is the most graspable axis at that point.
    """
    from shapely.geometry import LineString

    p = np.array([px, py])
    best_phi, best_extent = 0.0, float("inf")
    for k in deployment_angle_indices(grid):
        phi = grid.angle(int(k))
        d = np.array([math.cos(phi), math.sin(phi)])
        line = LineString([p - 2.0 * d, p + 2.0 * d])
        inter = line.intersection(poly)
        if inter.is_empty:
            continue
        coords = []
        for geom in getattr(inter, "geoms", [inter]):
            coords.extend(geom.coords)
        t = [(np.array(q[:2]) - p) @ d for q in coords]
        extent = max(t) - min(t)
        if extent < best_extent:
            best_extent, best_phi = extent, phi
    return best_phi


def oracle_annotator(
    scene: SceneSpec,
    rng: np.random.Generator,
    grid: AngleGrid = AngleGrid(),
    noise_pos_m: float = ANNOTATOR_POS_SIGMA_M,
    noise_angle: float = ANNOTATOR_ANGLE_SIGMA,
) -> Grasp:
    """Synthetic human proposal: a random block's centroid, grasped across
    its thinnest direction there, with Gaussian position/angle jitter.
    """
    if not scene.blocks:
        raise ValueError("cannot annotate an empty scene")
    block = scene.blocks[int(rng.integers(len(scene.blocks)))]
    poly = block.polygon()
    c = poly.centroid
    phi = _min_width_angle(poly, c.x, c.y, grid)
    x = c.x + rng.normal(0.0, noise_pos_m)
    y = c.y + rng.normal(0.0, noise_pos_m)
    phi = (phi + rng.normal(0.0, noise_angle)) % math.pi
    row, col = world_to_pixel(x, y, scene.workspace)
    lo = scene.workspace.margin_px
    hi = scene.workspace.side_px - scene.workspace.margin_px - 1
    row, col = int(np.clip(row, lo, hi)), int(np.clip(col, lo, hi))
    return Grasp(row, col, _snap_to_deployment_grid(phi, grid))


def oracle_policy(
    grid: AngleGrid = AngleGrid(),
    noise_pos_m: float = ANNOTATOR_POS_SIGMA_M,
    noise_angle: float = ANNOTATOR_ANGLE_SIGMA,
) -> Policy:
    def policy(x: Heightmap, scene: SceneSpec, rng: np.random.Generator) -> Grasp:
        return oracle_annotator(scene, rng, grid, noise_pos_m, noise_angle)

    return policy


def random_policy(grid: AngleGrid = AngleGrid()) -> Policy:
    """Uniform graspable pixel with a uniform deployment angle."""

    def policy(x: Heightmap, scene: SceneSpec, rng: np.random.Generator) -> Grasp:
        ws = scene.workspace
        lo, hi = ws.margin_px, ws.side_px - ws.margin_px
        row = int(rng.integers(lo, hi))
        col = int(rng.integers(lo, hi))
        k = int(rng.integers(DEPLOYMENT_ANGLE_COUNT)) * (grid.size // DEPLOYMENT_ANGLE_COUNT)
        return Grasp(row, col, k)

    return policy


def mixed_policy(policies: list[Policy], weights: list[float]) -> Policy:
    """Draw one of ``policies`` per attempt with the given probabilities."""
    w = np.asarray(weights, dtype=float)
    w = w / w.sum()

    def policy(x: Heightmap, scene: SceneSpec, rng: np.random.Generator) -> Grasp:
        return policies[int(rng.choice(len(policies), p=w))](x, scene, rng)

    return policy


@dataclass
class EpochRollout:
    """Full attempt log of one epoch on one scene."""

    records: list[GraspRecord]
    heightmaps: dict[str, Heightmap]
    attempts: int
    successes: int
    ended_empty: bool
    final_scene: SceneSpec


def run_epoch(
    scene: SceneSpec,
    policy: Policy,
    rng: np.random.Generator,
    grid: AngleGrid = AngleGrid(),
    gripper: GripperSpec = DEFAULT_GRIPPER,
    provenance: str = "robot",
    max_consecutive_failures: int = MAX_CONSECUTIVE_FAILURES,
) -> EpochRollout:
    """Grasp continuously until the scene is empty or the policy fails
    ``max_consecutive_failures`` times in a row.
    """
    records: list[GraspRecord] = []
    heightmaps: dict[str, Heightmap] = {}
    successes = 0
    consecutive_failures = 0
    step = 0
    ended_empty = False
    while True:
        x = render_heightmap(scene)
        if is_empty(x, scene.workspace):
            ended_empty = True
            break
        grasp = policy(x, scene, rng)
        outcome, scene = execute_grasp(scene, grasp, grid, gripper, heightmap=x)
        state_id = f"{scene.scene_id}.t{step:03d}"
        heightmaps[state_id] = x
        records.append(GraspRecord(state_id, grasp, outcome.success, provenance))
        step += 1
        if outcome.success:
            successes += 1
            consecutive_failures = 0
        else:
            consecutive_failures += 1
            if consecutive_failures >= max_consecutive_failures:
                break
    return EpochRollout(records, heightmaps, step, successes, ended_empty, scene)


def collect_experience(
    n_scenes: int,
    policy: Policy,
    seed: int,
    tag: str,
    blocks_range: tuple[int, int] = (1, 39),
    workspace=None,
    grid: AngleGrid = AngleGrid(),
    gripper: GripperSpec = DEFAULT_GRIPPER,
    provenance: str = "robot",
    max_records: int | None = None,
) -> tuple[list[GraspRecord], dict[str, Heightmap]]:
    """Roll epochs over freshly spawned scenes and aggregate the records.

    Stops early once ``max_records`` is reached (the record budget of a
    collection campaign); otherwise runs all ``n_scenes`` epochs.
    """
    if n_scenes < 1:
        raise ValueError("need at least one scene")
    from ..geometry import DESK_WORKSPACE

    ws = workspace if workspace is not None else DESK_WORKSPACE
    records: list[GraspRecord] = []
    heightmaps: dict[str, Heightmap] = {}
    for i in range(n_scenes):
        ss = np.random.SeedSequence([seed, i])
        scene_seed = int(ss.generate_state(1)[0])
        rng = np.random.default_rng(ss.spawn(1)[0])
        n_blocks = int(rng.integers(blocks_range[0], blocks_range[1] + 1))
        scene = spawn_scene(scene_seed, n_blocks, ws, scene_id=f"{tag}-{i:05d}")
        rollout = run_epoch(scene, policy, rng, grid, gripper, provenance)
        records.extend(rollout.records)
        heightmaps.update(rollout.heightmaps)
        if max_records is not None and len(records) >= max_records:
            records = records[:max_records]
            heightmaps = {r.scene_id: heightmaps[r.scene_id] for r in records}
            break
    return records, heightmaps
