"""Pseudo-label extraction: SE(2) argmax with angle subsampling and
top-n selection with proximity banning.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .geometry import (
    AngleGrid,
    Grasp,
    GraspRecord,
    Heightmap,
    WorkspaceGeometry,
    workspace_for,
)
from .model import affordance_volume


@dataclass(frozen=True)
class PseudoLabelConfig:
    """Angle subsampling + label extraction knobs.

    ``ban_radius_px`` defaults to half the native 64 px stroke; pass the
    half-stroke of the active workspace at other resolutions.
    """

    k_angles: int = 16
    n_labels: int = 1
    ban_radius_px: int = 32

    def __post_init__(self):
        if not 1 <= self.k_angles <= 64:
            raise ValueError(f"k_angles must be in [1, 64], got {self.k_angles}")
        if self.n_labels < 1:
            raise ValueError("n_labels must be >= 1")
        if self.ban_radius_px < 1:
            raise ValueError("ban_radius_px must be >= 1")


class ScoredGrasp(NamedTuple):
    grasp: Grasp
    score: float


def sample_angles(k: int, grid: AngleGrid, rng: np.random.Generator) -> np.ndarray:
    """Draw k distinct grid angles uniformly without replacement, ascending."""
    if not 1 <= k <= grid.size:
        raise ValueError(f"k must be in [1, {grid.size}], got {k}")
    if k == grid.size:
        return grid.angles()
    idx = np.sort(rng.choice(grid.size, size=k, replace=False))
    return idx * (math.pi / grid.size)


def _graspable_volume(
    x: Heightmap,
    model,
    angles: Sequence[float],
    workspace: WorkspaceGeometry | None,
    compiled: bool,
    batch_size: int,
) -> tuple[np.ndarray, WorkspaceGeometry]:
    ws = workspace if workspace is not None else workspace_for(x)
    vol = affordance_volume(model, x, angles, compiled=compiled, batch_size=batch_size)
    sl = ws.graspable_slice
    # (K, h, w) so a flat argmax tie-breaks on lowest (angle, row, col).
    region = np.ascontiguousarray(np.moveaxis(vol.values[sl, sl, :], -1, 0))
    return region, ws

def _nth_best(region: np.ndarray, banned: np.ndarray | None) -> tuple[int, int, int, float] | None:
    """Flat argmax of the unbanned cells; None when everything is banned."""
    if banned is not None:
        if banned.all():
            return None
        scores = np.where(banned[None, :, :], -np.inf, region)
    else:
        scores = region
    flat = int(np.argmax(scores))
    k, r, c = np.unravel_index(flat, region.shape)
    return int(k), int(r), int(c), float(region[k, r, c])


def best_grasp(
    x: Heightmap,
    model,
    angles: Sequence[float],
    workspace: WorkspaceGeometry | None = None,
    grid: AngleGrid = AngleGrid(),
    compiled: bool = False,
    batch_size: int = 16,
) -> ScoredGrasp:
    """Argmax grasp over the volume, restricted to the graspable region.

    Ties break toward the lowest (angle index, row, col).
    """
    if len(angles) == 0:
        raise ValueError("best_grasp needs at least one angle")
    region, ws = _graspable_volume(x, model, angles, workspace, compiled, batch_size)
    k, r, c, score = _nth_best(region, None)
    m = ws.margin_px
    return ScoredGrasp(Grasp(r + m, c + m, grid.nearest_index(float(angles[k]))), score)


def top_n_grasps(
    x: Heightmap,
    model,
    angles: Sequence[float],
    n: int,
    ban_radius_px: int,
    workspace: WorkspaceGeometry | None = None,
    grid: AngleGrid = AngleGrid(),
    compiled: bool = False,
    batch_size: int = 16,
) -> list[ScoredGrasp]:
    """Iteratively take the best unbanned cell, banning a spatial disk
    (across all angles) around each selection. May return fewer than n
    grasps when the volume is exhausted.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    region, ws = _graspable_volume(x, model, angles, workspace, compiled, batch_size)
    _, h, w = region.shape
    rows, cols = np.mgrid[0:h, 0:w]
    banned = np.zeros((h, w), dtype=bool)
    m = ws.margin_px
    out: list[ScoredGrasp] = []
    for _ in range(n):
        pick = _nth_best(region, banned)
        if pick is None:
            break
        k, r, c, score = pick
        out.append(ScoredGrasp(Grasp(r + m, c + m, grid.nearest_index(float(angles[k]))), score))
        banned |= (rows - r) ** 2 + (cols - c) ** 2 <= ban_radius_px**2
    return out


def generate_pseudo_labels(
    unlabeled: dict[str, Heightmap],
    model,
    config: PseudoLabelConfig,
    seed: int,
    workspace: WorkspaceGeometry | None = None,
    grid: AngleGrid = AngleGrid(),
    compiled: bool = False,
    batch_size: int = 16,
) -> list[GraspRecord]:
    """Teacher-argmax labels over unlabeled scenes, all marked successful.

    Angle subsets are re-sampled per scene from an rng stream split by the
    scene's position in sorted id order, so scenes are independent and the
    whole extraction is reproducible.
    """
    if len(unlabeled) == 0:
        raise ValueError("no unlabeled scenes to pseudo-label")
    records: list[GraspRecord] = []
    for i, sid in enumerate(sorted(unlabeled)):
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        angles = sample_angles(config.k_angles, grid, rng)
        picks = top_n_grasps(
            unlabeled[sid],
            model,
            angles,
            config.n_labels,
            config.ban_radius_px,
            workspace,
            grid,
            compiled,
            batch_size,
        )
        for pick in picks:
            records.append(GraspRecord(sid, pick.grasp, True, "pseudo"))
    return records
