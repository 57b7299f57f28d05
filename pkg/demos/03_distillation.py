"""Teacher-to-student distillation over unlabeled scenes, desk scale.

The student never sees a ground-truth label: the teacher's best-scored
grasp on each unlabeled scene becomes a positive pseudo-label, then the
student trains on those exactly like the teacher trained on human labels.

Run:  python3 demos/03_distillation.py   (~2 minutes on CPU)
"""

import numpy as np

from graspkit import (
    AngleGrid,
    Dataset,
    DenseModelConfig,
    PseudoLabelConfig,
    TrainConfig,
    WorkspaceGeometry,
    generate_pseudo_labels,
    output_entropy,
    train_student,
    train_teacher,
)
from graspkit.sim import collect_experience, oracle_policy, render_heightmap, spawn_scene

grid = AngleGrid(64)
ws = WorkspaceGeometry(side_px=64)
rng = np.random.default_rng(3)

records, heightmaps = collect_experience(
    n_scenes=40, policy=oracle_policy(grid), seed=11, tag="lab",
    blocks_range=(2, 6), workspace=ws, grid=grid, provenance="oracle", max_records=60,
)
labeled = Dataset("labeled", heightmaps, records, grid.size)

unlabeled_maps = {}
for i in range(60):
    scene = spawn_scene(9000 + i, int(rng.integers(2, 7)), ws, scene_id=f"u{i:03d}")
    unlabeled_maps[scene.scene_id] = render_heightmap(scene)
unlabeled = Dataset("unlabeled", unlabeled_maps, [], grid.size)

config = TrainConfig(epochs=8, seed=0, model=DenseModelConfig(input_size=64, channels=(8, 16, 32)))
teacher, _ = train_teacher(labeled, config, grid=grid)
print("teacher trained on", len(labeled.records), "labels")

# Pseudo-labels: per scene, sample 16 of the 64 grid angles, take the argmax.
pseudo_cfg = PseudoLabelConfig(k_angles=16, n_labels=1, ban_radius_px=ws.stroke_px // 2)
pseudo = generate_pseudo_labels(
    unlabeled_maps, teacher, pseudo_cfg, seed=1, workspace=ws, grid=grid
)
print("pseudo-labels:", len(pseudo), "(all treated as successes)")

student, _ = train_student(
    teacher, unlabeled, config, pseudo=pseudo_cfg, pseudo_records=pseudo, grid=grid
)

# The student imitates argmax picks, so its score mass concentrates:
# output entropy drops well below the teacher's.
angles = [grid.angle(k) for k in range(0, 64, 4)]
scenes = list(unlabeled_maps.values())[:10]
t_ent = np.median([output_entropy(teacher, x, angles) for x in scenes])
s_ent = np.median([output_entropy(student, x, angles) for x in scenes])
print(f"median output entropy: teacher {t_ent:.2f} nats, student {s_ent:.2f} nats")
