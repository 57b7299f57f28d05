"""Success-rate proxies, Wilson intervals, and simulator evaluation."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .geometry import AngleGrid, Grasp, Heightmap, WorkspaceGeometry, workspace_for
from .model import DenseModel, rotated_score_batch
from .pseudolabel import best_grasp
from .sim import (
    DEFAULT_GRIPPER,
    GripperSpec,
    deployment_angle_indices,
    run_epoch,
    spawn_scene,
)

WILSON_Z_95 = 1.959964
EVAL_BLOCKS_PER_SCENE = 50


def ema(values: Sequence[float], alpha: float = 0.8) -> float:
    """Exponential moving average, alpha weighting the previous average.

    m_1 = v_1; m_t = alpha * m_{t-1} + (1 - alpha) * v_t; returns m_T.
    """
    if len(values) == 0:
        raise ValueError("ema of an empty list")
    m = float(values[0])
    for v in values[1:]:
        m = alpha * m + (1 - alpha) * float(v)
    return m


def wilson_interval(
    successes: int, attempts: int, confidence: float = 0.95
) -> tuple[float, float]:
    """Wilson score interval for a Bernoulli success rate."""
    if attempts < 1:
        raise ValueError("wilson_interval needs at least one attempt")
    if not 0 <= successes <= attempts:
        raise ValueError(f"successes {successes} outside [0, {attempts}]")
    if confidence == 0.95:
        z = WILSON_Z_95
    else:
        from scipy.stats import norm

        z = float(norm.ppf(0.5 + confidence / 2))
    n = attempts
    p = successes / n
    denom = 1 + z**2 / n
    center = (p + z**2 / (2 * n)) / denom
    margin = z * math.sqrt(p * (1 - p) / n + z**2 / (4 * n**2)) / denom
    low = 0.0 if successes == 0 else max(0.0, center - margin)
    high = 1.0 if successes == attempts else min(1.0, center + margin)
    return low, high


# -- affordance proxy ----------------------------------------------------------


def _require_affordance(affordance: DenseModel) -> None:
    role = affordance.manifest.get("role")
    if role != "affordance":
        raise ValueError(f"model manifest role is {role!r}, need a trained affordance model")
    if affordance.manifest.get("trained_on") is None:
        raise ValueError("affordance model manifest carries no training-data fingerprint")


def proxy_success_batch(
    model: DenseModel,
    affordance: DenseModel,
    items: Sequence[tuple[Heightmap, float]],
    workspace: WorkspaceGeometry | None = None,
    compiled: bool = False,
    batch_size: int = 16,
) -> list[bool]:
    """Affordance verdicts for (scene, fixed angle) items.

    For each item: spatial argmax of the evaluated model's scores at the
    fixed angle (graspable region only), then the affordance's sigmoid
    score at that pixel; success iff strictly above 0.5.
    """
    _require_affordance(affordance)
    if not items:
        return []
    ws = workspace if workspace is not None else workspace_for(items[0][0])
    sl = ws.graspable_slice
    m = ws.margin_px
    verdicts: list[bool] = []
    for i in range(0, len(items), batch_size):
        chunk = items[i : i + batch_size]
        scores = _item_scores(model, chunk, compiled)
        afford = _item_scores(affordance, chunk, compiled)
        for j in range(len(chunk)):
            region = scores[j][sl, sl]
            r, c = np.unravel_index(int(np.argmax(region)), region.shape)
            logit = float(afford[j][r + m, c + m])
            verdicts.append(1.0 / (1.0 + math.exp(-logit)) > 0.5)
    return verdicts


def _item_scores(model, items: Sequence[tuple[Heightmap, float]], compiled: bool) -> np.ndarray:
    """Per-item score maps at each item's own angle, shape (N, H, W).

    DenseModel takes the batched torch path; duck-typed scorers fall back
    to their forward_angles method one item at a time.
    """
    if isinstance(model, DenseModel):
        raw = torch.from_numpy(np.stack([x.values for x, _ in items]))
        angles = torch.tensor([phi for _, phi in items], dtype=torch.float32)
        bg = items[0][0].background_level
        with torch.no_grad():
            return rotated_score_batch(model, raw, angles, bg, compiled=compiled).numpy()
    return np.stack([model.forward_angles(x, [phi])[0] for x, phi in items])


def proxy_success(
    model: DenseModel,
    affordance: DenseModel,
    x: Heightmap,
    fixed_angle: float,
    workspace: WorkspaceGeometry | None = None,
) -> bool:
    """Single-scene affordance-proxy verdict (see proxy_success_batch)."""
    return proxy_success_batch(model, affordance, [(x, fixed_angle)], workspace)[0]


# -- simulator evaluation ------------------------------------------------------


@dataclass
class EvalReport:
    """Evaluation outcome with per-epoch counts so intervals re-derive."""

    attempts: int
    successes: int
    rate: float
    wilson_low: float
    wilson_high: float
    per_epoch: list[dict] = field(default_factory=list)
    ema_rate: float | None = None
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_counts(cls, per_epoch: list[dict], meta: dict | None = None) -> "EvalReport":
        attempts = sum(e["attempts"] for e in per_epoch)
        successes = sum(e["successes"] for e in per_epoch)
        rate = successes / attempts if attempts else 0.0
        low, high = wilson_interval(successes, attempts) if attempts else (0.0, 1.0)
        rates = [e["successes"] / e["attempts"] for e in per_epoch if e["attempts"]]
        return cls(
            attempts,
            successes,
            rate,
            low,
            high,
            per_epoch,
            ema(rates) if rates else None,
            meta or {},
        )

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            json.dump(asdict(self), f, indent=2, sort_keys=True)
            f.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "EvalReport":
        with open(path) as f:
            return cls(**json.load(f))


def model_policy(
    model: DenseModel,
    grid: AngleGrid = AngleGrid(),
    angle_count: int = 16,
    compiled: bool = False,
    batch_size: int = 16,
):
    """Argmax policy over the fixed deployment angle subgrid."""
    angles = deployment_angle_indices(grid, angle_count) * (math.pi / grid.size)

    def policy(x: Heightmap, scene, rng) -> Grasp:
        return best_grasp(
            x, model, angles, grid=grid, compiled=compiled, batch_size=batch_size
        ).grasp

    return policy


def evaluate_in_sim(
    model: DenseModel | None,
    n_attempts_target: int,
    seed: int,
    eval_angle_count: int = 16,
    n_blocks: int = EVAL_BLOCKS_PER_SCENE,
    workspace: WorkspaceGeometry | None = None,
    grid: AngleGrid = AngleGrid(),
    gripper: GripperSpec = DEFAULT_GRIPPER,
    policy=None,
    compiled: bool = False,
    meta: dict | None = None,
) -> EvalReport:
    """Roll epochs on fresh seeded scenes until the attempt target is met.

    Pass either a model (argmax policy over the deployment angles) or an
    explicit policy.
    """
    if (model is None) == (policy is None):
        raise ValueError("pass exactly one of model or policy")
    if policy is None:
        policy = model_policy(model, grid, eval_angle_count, compiled=compiled)
    from .geometry import DESK_WORKSPACE

    ws = workspace if workspace is not None else DESK_WORKSPACE
    per_epoch: list[dict] = []
    attempts = 0
    k = 0
    while attempts < n_attempts_target:
        ss = np.random.SeedSequence([seed, k])
        scene_seed = int(ss.generate_state(1)[0])
        scene = spawn_scene(scene_seed, n_blocks, ws, scene_id=f"eval{seed}-{k:05d}")
        rng = np.random.default_rng(ss.spawn(1)[0])
        rollout = run_epoch(scene, policy, rng, grid, gripper)
        per_epoch.append(
            {"epoch": k, "attempts": rollout.attempts, "successes": rollout.successes}
        )
        attempts += rollout.attempts
        k += 1
    return EvalReport.from_counts(per_epoch, meta={"seed": seed, **(meta or {})})


def alternating_eval(
    model_a: DenseModel,
    model_b: DenseModel,
    seed: int,
    n_epochs_each: int | None = None,
    min_attempts_each: int | None = None,
    eval_angle_count: int = 16,
    n_blocks: int = EVAL_BLOCKS_PER_SCENE,
    workspace: WorkspaceGeometry | None = None,
    grid: AngleGrid = AngleGrid(),
    gripper: GripperSpec = DEFAULT_GRIPPER,
    compiled: bool = False,
) -> tuple[EvalReport, EvalReport]:
    """Paired evaluation: an epoch of A always precedes the B epoch run on
    an identically spawned scene, eliminating scene-difficulty drift.

    Stops after ``n_epochs_each`` pairs, or once both sides reach
    ``min_attempts_each`` attempts.
    """
    if (n_epochs_each is None) == (min_attempts_each is None):
        raise ValueError("pass exactly one stopping rule")
    from .geometry import DESK_WORKSPACE

    ws = workspace if workspace is not None else DESK_WORKSPACE
    pol_a = model_policy(model_a, grid, eval_angle_count, compiled=compiled)
    pol_b = model_policy(model_b, grid, eval_angle_count, compiled=compiled)
    eps_a: list[dict] = []
    eps_b: list[dict] = []
    order: list[str] = []
    k = 0
    while True:
        if n_epochs_each is not None and k >= n_epochs_each:
            break
        if min_attempts_each is not None:
            got_a = sum(e["attempts"] for e in eps_a)
            got_b = sum(e["attempts"] for e in eps_b)
            if min(got_a, got_b) >= min_attempts_each:
                break
        ss = np.random.SeedSequence([seed, k])
        scene_seed = int(ss.generate_state(1)[0])
        for name, pol, eps in (("a", pol_a, eps_a), ("b", pol_b, eps_b)):
            scene = spawn_scene(scene_seed, n_blocks, ws, scene_id=f"alt{seed}-{k:05d}{name}")
            rng = np.random.default_rng(ss.spawn(1)[0])
            rollout = run_epoch(scene, pol, rng, grid, gripper)
            eps.append({"epoch": k, "attempts": rollout.attempts, "successes": rollout.successes})
            order.append(name)
        k += 1
    meta = {"seed": seed, "epoch_order": order}
    return (
        EvalReport.from_counts(eps_a, {**meta, "side": "a"}),
        EvalReport.from_counts(eps_b, {**meta, "side": "b"}),
    )
