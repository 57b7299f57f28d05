import base64
import io

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from graspkit.datastore import load_dataset, load_scene
from graspkit.geometry import AngleGrid, Grasp, WorkspaceGeometry
from graspkit.server import create_app
from graspkit.sim import execute_grasp

WS = WorkspaceGeometry(side_px=64)
GRID = AngleGrid(64)


@pytest.fixture()
def client(tmp_path):
    app = create_app(tmp_path / "out", n_scenes=3, seed=7, workspace=WS, blocks_range=(2, 3))
    with TestClient(app) as c:
        c.out_dir = tmp_path / "out"
        yield c


def decode_heightmap(b64):
    img = Image.open(io.BytesIO(base64.b64decode(b64)))
    return np.asarray(img, dtype=np.uint16)


def center_of_mass(units):
    rows, cols = np.nonzero(units)
    return int(rows.mean()), int(cols.mean())


class TestSceneNext:
    def test_payload_fields(self, client):
        p = client.get("/api/scene/next").json()
        assert p["status"] == "active"
        assert p["angle_count"] == 16
        assert p["graspable"] == {"lo": WS.margin_px, "hi": WS.side_px - WS.margin_px}
        assert p["pixel_scale"] == pytest.approx(WS.pixel_scale)
        units = decode_heightmap(p["heightmap"])
        assert units.shape == (64, 64)
        assert units.max() > 0  # blocks present

    def test_idempotent_until_answered(self, client):
        a = client.get("/api/scene/next").json()
        b = client.get("/api/scene/next").json()
        assert a["scene_id"] == b["scene_id"]
        assert a["heightmap"] == b["heightmap"]

    def test_advances_after_submit(self, client):
        a = client.get("/api/scene/next").json()
        r, c = center_of_mass(decode_heightmap(a["heightmap"]))
        lo, hi = a["graspable"]["lo"], a["graspable"]["hi"]
        r, c = np.clip(r, lo, hi - 1), np.clip(c, lo, hi - 1)
        client.post("/api/grasp", json={"scene_id": a["scene_id"], "row": int(r),
                                        "col": int(c), "angle_index": 0})
        b = client.get("/api/scene/next").json()
        assert b["scene_id"] != a["scene_id"]


class TestGrasp:
    def test_empty_area_failure_persisted(self, client):
        p = client.get("/api/scene/next").json()
        units = decode_heightmap(p["heightmap"])
        lo, hi = p["graspable"]["lo"], p["graspable"]["hi"]
        # find an empty graspable pixel far from any block
        rows, cols = np.nonzero(units == 0)
        inside = (rows >= lo + 8) & (rows < hi - 8) & (cols >= lo + 8) & (cols < hi - 8)
        # choose the empty pixel maximizing distance to raised pixels
        raised = np.argwhere(units > 0)
        best, best_d = None, -1
        for r, c in zip(rows[inside][::13], cols[inside][::13]):
            d = np.min(np.hypot(raised[:, 0] - r, raised[:, 1] - c))
            if d > best_d:
                best, best_d = (int(r), int(c)), d
        out = client.post("/api/grasp", json={"scene_id": p["scene_id"], "row": best[0],
                                              "col": best[1], "angle_index": 0}).json()
        assert out["outcome"] == "failure"
        assert out["failure_reason"] in ("no_object", "empty_pinch")
        ds = load_dataset(client.out_dir)
        assert len(ds.records) == 1
        assert not ds.records[0].outcome
        assert ds.records[0].provenance == "human"

    def test_out_of_region_rejected(self, client):
        p = client.get("/api/scene/next").json()
        r = client.post("/api/grasp", json={"scene_id": p["scene_id"], "row": 0,
                                            "col": 0, "angle_index": 0})
        assert r.status_code == 422

    def test_wrong_scene_rejected(self, client):
        client.get("/api/scene/next")
        r = client.post("/api/grasp", json={"scene_id": "ghost", "row": 20,
                                            "col": 20, "angle_index": 0})
        assert r.status_code == 409

    def test_outcome_matches_independent_execution(self, client):
        p = client.get("/api/scene/next").json()
        units = decode_heightmap(p["heightmap"])
        r, c = center_of_mass(units)
        lo, hi = p["graspable"]["lo"], p["graspable"]["hi"]
        r, c = int(np.clip(r, lo, hi - 1)), int(np.clip(c, lo, hi - 1))
        out = client.post("/api/grasp", json={"scene_id": p["scene_id"], "row": r,
                                              "col": c, "angle_index": 3}).json()
        scene = load_scene(client.out_dir / "scenes" / f"{p['scene_id']}.json")
        expect, _ = execute_grasp(scene, Grasp(r, c, 12), GRID)
        assert out["outcome"] == ("success" if expect.success else "failure")


class TestSession:
    def submit_center(self, client):
        p = client.get("/api/scene/next").json()
        if p.get("status") == "complete":
            return p, None
        units = decode_heightmap(p["heightmap"])
        r, c = center_of_mass(units)
        lo, hi = p["graspable"]["lo"], p["graspable"]["hi"]
        r, c = int(np.clip(r, lo, hi - 1)), int(np.clip(c, lo, hi - 1))
        out = client.post("/api/grasp", json={"scene_id": p["scene_id"], "row": r,
                                              "col": c, "angle_index": 1}).json()
        return p, out

    def test_full_session_counts(self, client):
        n = 0
        while True:
            p, out = self.submit_center(client)
            if out is None:
                break
            n += 1
        assert n == 3
        prog = client.get("/api/progress").json()
        assert prog["labeled"] == 3
        assert prog["remaining"] == 0
        ds = load_dataset(client.out_dir)
        assert len(ds.records) == 3
        successes = sum(r.outcome for r in ds.records)
        assert prog["success_count"] == successes

    def test_progress_counts(self, client):
        prog = client.get("/api/progress").json()
        assert prog == {"labeled": 0, "remaining": 3, "success_count": 0}
        self.submit_center(client)
        prog = client.get("/api/progress").json()
        assert prog["labeled"] == 1
        assert prog["remaining"] == 2
