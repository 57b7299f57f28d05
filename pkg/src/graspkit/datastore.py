"""Bit-exact dataset storage, manifests, and scene-level splitting.

Directory layout of a saved dataset::

    <path>/
      manifest.json        # counts, geometry, format version, content hash
      records.jsonl        # one grasp record per line
      heightmaps/<id>.png  # 16-bit grayscale, 0.1 mm per unit

Depth is stored in units of 0.1 mm above the table plane (max
representable 6.55 m). The simulator renders on that quantum, so save /
load round trips are bit-exact.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .geometry import Grasp, GraspRecord, Heightmap, WorkspaceGeometry
from .sim.scene import BlockInstance, SceneSpec

FORMAT_VERSION = 1
DEPTH_UNIT_M = 1e-4


@dataclass
class Dataset:
    """In-memory dataset: heightmaps by scene id + grasp records."""

    name: str
    heightmaps: dict[str, Heightmap]
    records: list[GraspRecord]
    angle_grid_size: int = 64
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        for r in self.records:
            if r.scene_id not in self.heightmaps:
                raise ValueError(f"record references unknown scene {r.scene_id!r}")

    @property
    def scene_ids(self) -> list[str]:
        return sorted(self.heightmaps)

    def positives(self) -> int:
        return sum(r.outcome for r in self.records)

    def negatives(self) -> int:
        return len(self.records) - self.positives()

    def provenance_histogram(self) -> dict[str, int]:
        hist: dict[str, int] = {}
        for r in self.records:
            hist[r.provenance] = hist.get(r.provenance, 0) + 1
        return hist

    def records_by_scene(self) -> dict[str, list[GraspRecord]]:
        by: dict[str, list[GraspRecord]] = {sid: [] for sid in self.heightmaps}
        for r in self.records:
            by[r.scene_id].append(r)
        return by

    def subset(self, scene_ids, name: str | None = None) -> "Dataset":
        keep = set(scene_ids)
        missing = keep - set(self.heightmaps)
        if missing:
            raise ValueError(f"unknown scene ids: {sorted(missing)[:3]}...")
        return Dataset(
            name or self.name,
            {sid: self.heightmaps[sid] for sid in sorted(keep)},
            [r for r in self.records if r.scene_id in keep],
            self.angle_grid_size,
            dict(self.extra),
        )


def _record_line(r: GraspRecord) -> str:
    return json.dumps(
        {
            "scene_id": r.scene_id,
            "row": r.grasp.row,
            "col": r.grasp.col,
            "angle_index": r.grasp.angle_index,
            "outcome": int(r.outcome),
            "provenance": r.provenance,
        },
        sort_keys=True,
    )


def _record_from_line(line: str) -> GraspRecord:
    d = json.loads(line)
    return GraspRecord(
        d["scene_id"],
        Grasp(d["row"], d["col"], d["angle_index"]),
        bool(d["outcome"]),
        d["provenance"],
    )


def _depth_to_u16(values: np.ndarray) -> np.ndarray:
    units = np.round(values.astype(np.float64) / DEPTH_UNIT_M)
    if (units < 0).any() or (units > 0xFFFF).any():
        raise ValueError("depth outside the storable range [0, 6.5535] m")
    return units.astype(np.uint16)


def _depth_from_u16(units: np.ndarray) -> np.ndarray:
    return (units.astype(np.float64) * DEPTH_UNIT_M).astype(np.float32)


def content_hash(dataset: Dataset) -> str:
    """Hash over canonicalized bytes: logically equal datasets hash equally."""
    h = hashlib.sha256()
    for line in sorted(_record_line(r) for r in dataset.records):
        h.update(line.encode())
        h.update(b"\n")
    for sid in dataset.scene_ids:
        hm = dataset.heightmaps[sid]
        h.update(sid.encode())
        h.update(np.int64(hm.side_px).tobytes())
        h.update(np.float64(hm.pixel_scale).tobytes())
        h.update(_depth_to_u16(hm.values - hm.background_level).tobytes())
    return h.hexdigest()


def build_manifest(dataset: Dataset) -> dict:
    geometry = {}
    if dataset.heightmaps:
        first = dataset.heightmaps[dataset.scene_ids[0]]
        geometry = {
            "side_px": first.side_px,
            "pixel_scale": first.pixel_scale,
            "background_level": first.background_level,
        }
    manifest = {
        "format_version": FORMAT_VERSION,
        "name": dataset.name,
        "record_count": len(dataset.records),
        "scene_count": len(dataset.heightmaps),
        "provenance_histogram": dataset.provenance_histogram(),
        "angle_grid_size": dataset.angle_grid_size,
        "geometry": geometry,
        "content_hash": content_hash(dataset),
    }
    if dataset.extra:
        manifest["extra"] = dataset.extra
    return manifest


def save_dataset(dataset: Dataset, path: str | Path) -> Path:
    """Write the dataset directory; returns the path."""
    path = Path(path)
    (path / "heightmaps").mkdir(parents=True, exist_ok=True)
    with open(path / "records.jsonl", "w") as f:
        for r in dataset.records:
            f.write(_record_line(r) + "\n")
    for sid in dataset.scene_ids:
        hm = dataset.heightmaps[sid]
        img = Image.fromarray(_depth_to_u16(hm.values - hm.background_level))
        img.save(path / "heightmaps" / f"{sid}.png")
    with open(path / "manifest.json", "w") as f:
        json.dump(build_manifest(dataset), f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def load_dataset(path: str | Path) -> Dataset:
    """Load and verify a dataset directory (format version + content hash)."""
    path = Path(path)
    with open(path / "manifest.json") as f:
        manifest = json.load(f)
    if manifest.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported dataset format version {manifest.get('format_version')!r}")
    geometry = manifest.get("geometry") or {}
    pixel_scale = geometry.get("pixel_scale", 0.45 / 338)
    background = geometry.get("background_level", 0.0)
    heightmaps: dict[str, Heightmap] = {}
    for png in sorted((path / "heightmaps").glob("*.png")):
        units = np.asarray(Image.open(png), dtype=np.uint16)
        heightmaps[png.stem] = Heightmap(
            _depth_from_u16(units) + background, pixel_scale, background
        )
    records = []
    with open(path / "records.jsonl") as f:
        for line in f:
            if line.strip():
                records.append(_record_from_line(line))
    dataset = Dataset(
        manifest["name"],
        heightmaps,
        records,
        manifest.get("angle_grid_size", 64),
        manifest.get("extra", {}),
    )
    actual = content_hash(dataset)
    if actual != manifest["content_hash"]:
        raise ValueError(
            f"content hash mismatch: manifest {manifest['content_hash'][:12]}..., "
            f"payload {actual[:12]}..."
        )
    return dataset


def split_by_scene(
    dataset: Dataset, fractions: tuple[float, float, float], seed: int
) -> tuple[Dataset, Dataset, Dataset]:
    """Split by scene id (all records of a scene land in one split)."""
    if len(fractions) != 3 or any(f < 0 for f in fractions):
        raise ValueError("need three non-negative fractions")
    if not math.isclose(sum(fractions), 1.0, abs_tol=1e-9):
        raise ValueError(f"fractions must sum to 1, got {sum(fractions)}")
    ids = dataset.scene_ids
    rng = np.random.default_rng(seed)
    order = [ids[i] for i in rng.permutation(len(ids))]
    n = len(ids)
    n_train = round(fractions[0] * n)
    n_val = round(fractions[1] * n)
    n_val = min(n_val, n - n_train)
    parts = (
        order[:n_train],
        order[n_train : n_train + n_val],
        order[n_train + n_val :],
    )
    names = ("train", "val", "test")
    assignment = {sid: name for part, name in zip(parts, names) for sid in part}
    out = []
    for part, name in zip(parts, names):
        child = dataset.subset(part, name=f"{dataset.name}.{name}")
        child.extra = dict(child.extra)
        child.extra["split"] = name
        child.extra["split_assignment_hash"] = hashlib.sha256(
            json.dumps(assignment, sort_keys=True).encode()
        ).hexdigest()[:16]
        out.append(child)
    return tuple(out)


def subsample_labeled(dataset: Dataset, fraction: float, seed: int) -> Dataset:
    """Scene-level uniform subsample keeping at least one positive record."""
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    if fraction == 1.0:
        return dataset
    if dataset.positives() == 0:
        raise ValueError("dataset has no positive records to preserve")
    ids = dataset.scene_ids
    n_keep = max(1, round(fraction * len(ids)))
    for attempt in range(100):
        rng = np.random.default_rng(np.random.SeedSequence([seed + attempt, len(ids)]))
        keep = [ids[i] for i in rng.permutation(len(ids))[:n_keep]]
        sub = dataset.subset(keep, name=f"{dataset.name}.sub{fraction:g}")
        if sub.positives() > 0:
            return sub
    raise RuntimeError("could not draw a subsample containing a positive record")


# -- scene files (simulator external interface) -------------------------------


def save_scene(scene: SceneSpec, path: str | Path) -> None:
    """One self-describing JSON file per scene; re-renderable bit-exactly."""
    payload = {
        "scene_id": scene.scene_id,
        "seed": scene.seed,
        "workspace": {
            "side_m": scene.workspace.side_m,
            "side_px": scene.workspace.side_px,
            "margin_m": scene.workspace.margin_m,
            "stroke_m": scene.workspace.stroke_m,
        },
        "blocks": [
            {
                "block_id": b.block_id,
                "shape_id": b.shape_id,
                "scale": b.scale,
                "x": b.x,
                "y": b.y,
                "yaw": b.yaw,
            }
            for b in scene.blocks
        ],
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(payload, f, indent=2)
        f.write("\n")


def load_scene(path: str | Path) -> SceneSpec:
    with open(path) as f:
        d = json.load(f)
    ws = WorkspaceGeometry(**d["workspace"])
    blocks = tuple(BlockInstance(**b) for b in d["blocks"])
    return SceneSpec(d["scene_id"], blocks, ws, d["seed"])
