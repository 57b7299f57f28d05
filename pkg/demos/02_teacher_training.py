"""Train a small teacher from synthetic annotations and inspect its scores.

Everything is desk-scale (64 px scenes, a few dozen records, 8 epochs) so
the demo finishes in about a minute on a laptop CPU.

Run:  python3 demos/02_teacher_training.py
"""

import numpy as np

from graspkit import (
    AngleGrid,
    Dataset,
    DenseModelConfig,
    TrainConfig,
    WorkspaceGeometry,
    forward,
    normalize_depth,
    train_teacher,
)
from graspkit.sim import collect_experience, oracle_policy

grid = AngleGrid(64)
ws = WorkspaceGeometry(side_px=64)

# Collect ~80 labeled grasps the way the real pipeline would: epochs of
# annotator proposals, successes and failures both kept.
records, heightmaps = collect_experience(
    n_scenes=50, policy=oracle_policy(grid), seed=7, tag="demo",
    blocks_range=(2, 6), workspace=ws, grid=grid, provenance="oracle",
    max_records=80,
)
dataset = Dataset("demo-labels", heightmaps, records, grid.size)
print(f"dataset: {len(dataset.records)} records on {len(dataset.heightmaps)} scene states "
      f"({dataset.positives()} successes)")

config = TrainConfig(
    epochs=8,
    seed=0,
    model=DenseModelConfig(input_size=64, channels=(8, 16, 32)),
)
model, log = train_teacher(dataset, config, grid=grid)
print("loss per epoch:", [round(e.mean_loss, 3) for e in log.entries])

# Score a fresh scene at the angle of its first labeled grasp and compare
# the argmax with where the annotator actually grasped.
sid = dataset.records[0].scene_id
x = dataset.heightmaps[sid]
g = dataset.records[0].grasp
scores = forward(model, x, grid.angle(g.angle_index)).values
sl = ws.graspable_slice
r, c = np.unravel_index(np.argmax(scores[sl, sl]), (ws.graspable_px, ws.graspable_px))
print(f"label at ({g.row}, {g.col}); model argmax at "
      f"({r + ws.margin_px}, {c + ws.margin_px})")
print(f"depth at argmax: {x.values[r + ws.margin_px, c + ws.margin_px] * 1000:.0f} mm "
      f"(background is 0)")
