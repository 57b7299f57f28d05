"""Verify a persisted annotation session against the scripted clicks.

Usage: verify_annotation_run.py <dataset_dir> <clicks_json>

Checks, exiting non-zero on any failure:
  * the dataset loads through the datastore (content-hash verified);
  * there is exactly one record per scripted click, and its coordinates
    equal the click;
  * served angle indices map onto the canonical 64-grid (x4);
  * each record's outcome matches an independent execute_grasp on the
    scene file the server persisted.
"""

import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from graspkit.datastore import load_dataset, load_scene  # noqa: E402
from graspkit.geometry import AngleGrid, Grasp  # noqa: E402
from graspkit.sim import execute_grasp  # noqa: E402


def main() -> int:
    out_dir = Path(sys.argv[1])
    with open(sys.argv[2]) as f:
        clicks = json.load(f)

    dataset = load_dataset(out_dir)  # raises on hash mismatch
    records = {r.scene_id: r for r in dataset.records}
    assert len(dataset.records) == len(clicks), (
        f"{len(dataset.records)} records vs {len(clicks)} clicks"
    )
    grid = AngleGrid(dataset.angle_grid_size)
    served_count = 16
    step = grid.size // served_count

    for click in clicks:
        sid = click["scene_id"]
        rec = records[sid]
        assert rec.grasp.row == click["row"], (sid, rec.grasp.row, click["row"])
        assert rec.grasp.col == click["col"], (sid, rec.grasp.col, click["col"])
        assert rec.grasp.angle_index == click["angle_index"] * step, sid
        assert rec.provenance == "human", sid

        scene = load_scene(out_dir / "scenes" / f"{sid}.json")
        outcome, _ = execute_grasp(
            scene, Grasp(rec.grasp.row, rec.grasp.col, rec.grasp.angle_index), grid
        )
        assert outcome.success == rec.outcome, (sid, outcome.failure_reason)
        assert outcome.success == (click["outcome"] == "success"), sid

    print(f"verified {len(clicks)} annotation records")
    return 0


if __name__ == "__main__":
    sys.exit(main())
