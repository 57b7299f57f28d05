"""Tour of the planar grasping world: spawn, render, grasp, epoch protocol.

Run:  python3 demos/01_simulated_world.py
"""

import numpy as np

from graspkit import AngleGrid, DESK_WORKSPACE
from graspkit.sim import (
    execute_grasp,
    grasp_height,
    oracle_annotator,
    oracle_policy,
    render_heightmap,
    run_epoch,
    spawn_scene,
)

grid = AngleGrid(64)

# A reproducible cluttered scene: 8 random blocks on the 128 px desk workspace.
scene = spawn_scene(seed=41, n_blocks=8, workspace=DESK_WORKSPACE)
x = render_heightmap(scene)
print(f"scene {scene.scene_id}: {len(scene.blocks)} blocks, "
      f"{(x.values > 0).mean():.0%} of pixels covered")

# ASCII view (one char per 4x4 pixel tile, deeper = darker).
tiles = x.values.reshape(32, 4, 32, 4).max(axis=(1, 3))
palette = " .:-=+*#%@"
for row in tiles[::2]:
    print("".join(palette[min(int(v / 0.05 * 9), 9)] for v in row))

# The synthetic annotator proposes a grasp on a random block: centroid,
# closing across the thinnest direction, human-like jitter.
rng = np.random.default_rng(0)
grasp = oracle_annotator(scene, rng, grid)
phi = grid.angle(grasp.angle_index)
h = grasp_height(x, grasp.row, grasp.col)
print(f"\nproposal: pixel ({grasp.row}, {grasp.col}), angle {phi:.2f} rad, "
      f"descend to {h * 1000:.0f} mm")

outcome, after = execute_grasp(scene, grasp, grid)
print(f"outcome: {'success' if outcome.success else outcome.failure_reason}")
print(f"blocks remaining: {len(after.blocks)}")

# A full epoch: grasp until the table is empty or 5 failures in a row.
rollout = run_epoch(scene, oracle_policy(grid), np.random.default_rng(1), grid)
print(f"\nepoch: {rollout.attempts} attempts, {rollout.successes} successes, "
      f"ended {'empty' if rollout.ended_empty else 'on failure streak'}")
print(f"records collected: {len(rollout.records)} "
      f"(positives: {sum(r.outcome for r in rollout.records)})")
