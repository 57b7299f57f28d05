"""Annotation backend: serve scenes, execute submitted grasps, persist records.

A session walks a fixed queue of spawned scenes, one grasp proposal per
scene. Submitted grasps are executed in the simulated world; the record
(with the pre-grasp heightmap) is persisted through the datastore in the
same format as every other dataset, with provenance "human".

API (JSON):
  GET  /api/scene/next  -> {scene_id, heightmap, pixel_scale, graspable,
                            angle_count} or {status: "complete", ...}
  POST /api/grasp       {scene_id, row, col, angle_index}
                        -> {outcome, failure_reason, heightmap}
  GET  /api/progress    -> {labeled, remaining, success_count}

Heightmaps travel as base64-encoded 16-bit grayscale PNG (0.1 mm units).
"""

from __future__ import annotations

import base64
import io
import threading
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.staticfiles import StaticFiles
from PIL import Image
from pydantic import BaseModel

from .datastore import DEPTH_UNIT_M, Dataset, save_dataset, save_scene
from .geometry import AngleGrid, Grasp, GraspRecord, Heightmap, WorkspaceGeometry
from .sim import DEPLOYMENT_ANGLE_COUNT, execute_grasp, render_heightmap, spawn_scene


def _heightmap_b64(x: Heightmap) -> str:
    units = np.round((x.values - x.background_level) / DEPTH_UNIT_M).astype(np.uint16)
    img = Image.fromarray(units)
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


class GraspSubmission(BaseModel):
    scene_id: str
    row: int
    col: int
    angle_index: int  # index into the served angle_count grid


class AnnotationSession:
    """Sequential single-user annotation over a queue of spawned scenes."""

    def __init__(
        self,
        out_dir: str | Path,
        n_scenes: int,
        seed: int = 0,
        workspace: WorkspaceGeometry | None = None,
        blocks_range: tuple[int, int] = (1, 12),
        grid: AngleGrid = AngleGrid(),
    ):
        from .geometry import DESK_WORKSPACE

        self.out_dir = Path(out_dir)
        self.n_scenes = n_scenes
        self.seed = seed
        self.workspace = workspace if workspace is not None else DESK_WORKSPACE
        self.blocks_range = blocks_range
        self.grid = grid
        self.index = 0
        self.records: list[GraspRecord] = []
        self.heightmaps: dict[str, Heightmap] = {}
        self.success_count = 0
        self.lock = threading.Lock()
        self._current = None  # (scene, heightmap)

    def _spawn(self, i: int):
        ss = np.random.SeedSequence([self.seed, i])
        rng = np.random.default_rng(ss.spawn(1)[0])
        n_blocks = int(rng.integers(self.blocks_range[0], self.blocks_range[1] + 1))
        scene = spawn_scene(
            int(ss.generate_state(1)[0]), n_blocks, self.workspace, scene_id=f"ann-{i:05d}"
        )
        return scene

    def current_scene(self):
        with self.lock:
            if self.index >= self.n_scenes:
                return None
            if self._current is None:
                scene = self._spawn(self.index)
                save_scene(scene, self.out_dir / "scenes" / f"{scene.scene_id}.json")
                self._current = (scene, render_heightmap(scene))
            return self._current

    def scene_payload(self) -> dict:
        current = self.current_scene()
        if current is None:
            return {
                "status": "complete",
                "labeled": len(self.records),
                "success_count": self.success_count,
            }
        scene, x = current
        ws = self.workspace
        return {
            "status": "active",
            "scene_id": scene.scene_id,
            "heightmap": _heightmap_b64(x),
            "side_px": ws.side_px,
            "pixel_scale": ws.pixel_scale,
            "graspable": {"lo": ws.margin_px, "hi": ws.side_px - ws.margin_px},
            "angle_count": DEPLOYMENT_ANGLE_COUNT,
            "stroke_px": ws.stroke_px,
        }

    def submit(self, sub: GraspSubmission) -> dict:
        with self.lock:
            if self.index >= self.n_scenes or self._current is None:
                raise HTTPException(409, "no active scene; GET /api/scene/next first")
            scene, x = self._current
            if sub.scene_id != scene.scene_id:
                raise HTTPException(409, f"scene {sub.scene_id} is not the active scene")
            ws = self.workspace
            if not ws.contains_grasp(sub.row, sub.col):
                raise HTTPException(422, "grasp outside the graspable region")
            if not 0 <= sub.angle_index < DEPLOYMENT_ANGLE_COUNT:
                raise HTTPException(422, "angle index outside the served grid")
            canonical = sub.angle_index * (self.grid.size // DEPLOYMENT_ANGLE_COUNT)
            grasp = Grasp(sub.row, sub.col, canonical)
            outcome, after = execute_grasp(scene, grasp, self.grid, heightmap=x)
            self.heightmaps[scene.scene_id] = x
            self.records.append(GraspRecord(scene.scene_id, grasp, outcome.success, "human"))
            if outcome.success:
                self.success_count += 1
            self._persist()
            self.index += 1
            self._current = None
            return {
                "outcome": "success" if outcome.success else "failure",
                "failure_reason": outcome.failure_reason,
                "heightmap": _heightmap_b64(render_heightmap(after)),
            }

    def _persist(self):
        dataset = Dataset("annotations", dict(self.heightmaps), list(self.records), self.grid.size)
        save_dataset(dataset, self.out_dir)

    def progress(self) -> dict:
        with self.lock:
            return {
                "labeled": len(self.records),
                "remaining": self.n_scenes - self.index,
                "success_count": self.success_count,
            }


def create_app(
    out_dir: str | Path,
    n_scenes: int,
    seed: int = 0,
    workspace: WorkspaceGeometry | None = None,
    blocks_range: tuple[int, int] = (1, 12),
    static_dir: str | Path | None = None,
) -> FastAPI:
    session = AnnotationSession(out_dir, n_scenes, seed, workspace, blocks_range)
    app = FastAPI(title="graspkit annotation")
    app.state.session = session

    @app.get("/api/scene/next")
    def scene_next():
        return session.scene_payload()

    @app.post("/api/grasp")
    def grasp(sub: GraspSubmission):
        return session.submit(sub)

    @app.get("/api/progress")
    def progress():
        return session.progress()

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")
    return app
