"""Evaluation machinery: Wilson intervals, EMA reporting, simulator rollouts.

Run:  python3 demos/04_evaluation.py
"""

import numpy as np

from graspkit import AngleGrid, WorkspaceGeometry, ema, evaluate_in_sim, wilson_interval
from graspkit.evaluation import alternating_eval
from graspkit.model import DenseModel, DenseModelConfig
from graspkit.sim import oracle_policy, random_policy

grid = AngleGrid(64)
ws = WorkspaceGeometry(side_px=64)

# Wilson 95% intervals at a few scales: same arithmetic as any reported
# success-rate table.
for successes, attempts in [(601, 1000), (15012, 25000), (4756, 6048)]:
    low, high = wilson_interval(successes, attempts)
    p = successes / attempts
    print(f"{successes}/{attempts}: {p:.2%}  +-{(high - low) / 2:.2%}")

# Exponential moving average over a noisy per-epoch metric: the number
# reported for a training run is the EMA at the final epoch.
rng = np.random.default_rng(0)
per_epoch = np.clip(0.6 + 0.08 * rng.standard_normal(30), 0, 1)
print(f"\nraw final epoch: {per_epoch[-1]:.3f}; EMA over 30 epochs: {ema(per_epoch):.3f}")

# Simulator evaluation of two hand-written policies, paired per scene so
# the comparison is free of scene-difficulty noise.
rep = evaluate_in_sim(None, 80, seed=3, policy=oracle_policy(grid),
                      n_blocks=4, workspace=ws)
print(f"\noracle policy: {rep.rate:.2%} over {rep.attempts} attempts "
      f"[{rep.wilson_low:.2%}, {rep.wilson_high:.2%}]")
rep = evaluate_in_sim(None, 80, seed=3, policy=random_policy(grid),
                      n_blocks=4, workspace=ws)
print(f"random policy: {rep.rate:.2%} over {rep.attempts} attempts")

# Alternating evaluation of two (here: identical) models: an epoch of A
# always precedes the B epoch on an identically spawned scene.
a = DenseModel.create(DenseModelConfig(input_size=64), seed=0)
b = DenseModel.create(DenseModelConfig(input_size=64), seed=0)
ra, rb = alternating_eval(a, b, seed=5, n_epochs_each=4, n_blocks=3, workspace=ws)
print(f"\nalternating eval, identical models: a={ra.rate:.2%} b={rb.rate:.2%} "
      f"(order: {' '.join(ra.meta['epoch_order'])})")
