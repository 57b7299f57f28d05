"""Training loops: teacher imitation, student distillation, affordance proxy.

All three share one gradient loop over (scene, grasp, outcome) items and
differ only in how the per-record loss reads the dense score maps:

* teacher/student: joint softmax over a pair of angle-conditioned maps
  (the labeled angle + a distant contrast angle), BCE at the label cell;
* affordance: per-pixel sigmoid at the labeled angle, BCE at the cell.
"""

from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import torch

from .datastore import Dataset, content_hash
from .geometry import AngleGrid, GraspRecord, Heightmap, distant_angle, workspace_for
from .model import DenseModel, DenseModelConfig, rotated_score_batch
from .pseudolabel import PseudoLabelConfig, generate_pseudo_labels

PROB_CLAMP = 1e-7


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer schedule of all model trainings (Adam + cosine decay)."""

    epochs: int = 30
    lr: float = 1e-3
    lr_min: float = 2e-6
    weight_decay: float = 1e-5
    batch_size: int = 8  # 16 for affordance training
    seed: int = 0
    val_fraction: float = 0.1
    compile: bool = False
    model: DenseModelConfig = field(default_factory=DenseModelConfig)

    def __post_init__(self):
        if not self.lr > self.lr_min > 0:
            raise ValueError("need lr > lr_min > 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    mean_loss: float
    val_proxy: float | None
    lr: float


@dataclass
class EpochLog:
    entries: list[EpochStats] = field(default_factory=list)

    def losses(self) -> list[float]:
        return [e.mean_loss for e in self.entries]

    def proxies(self) -> list[float]:
        return [e.val_proxy for e in self.entries if e.val_proxy is not None]

    def to_dicts(self) -> list[dict]:
        return [vars(e) for e in self.entries]


def bce_at_pixel(prob: float, y: int) -> float:
    """Binary cross entropy at one cell, probability clamped before the log."""
    p = min(max(float(prob), PROB_CLAMP), 1.0 - PROB_CLAMP)
    return -(y * math.log(p) + (1 - y) * math.log(1.0 - p))


def cosine_lr(
    step: int, total_steps: int, lr_max: float = 1e-3, lr_min: float = 2e-6
) -> float:
    """Cosine decay from lr_max at step 0 to lr_min at total_steps."""
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    if total_steps == 0:
        return lr_max
    return lr_min + 0.5 * (lr_max - lr_min) * (1 + math.cos(math.pi * step / total_steps))


def balanced_resample(
    records: Sequence[GraspRecord], rng: np.random.Generator
) -> list[GraspRecord]:
    """Oversample the minority outcome class to a 1:1 ratio, shuffled."""
    pos = [r for r in records if r.outcome]
    neg = [r for r in records if not r.outcome]
    if not pos or not neg:
        raise ValueError("balanced_resample needs both outcome classes")
    if len(pos) < len(neg):
        extra = [pos[i] for i in rng.integers(len(pos), size=len(neg) - len(pos))]
        pos = pos + extra
    elif len(neg) < len(pos):
        extra = [neg[i] for i in rng.integers(len(neg), size=len(pos) - len(neg))]
        neg = neg + extra
    out = pos + neg
    return [out[i] for i in rng.permutation(len(out))]


def joint_softmax_bce(
    logits: torch.Tensor, rows: torch.Tensor, cols: torch.Tensor, ys: torch.Tensor
) -> torch.Tensor:
    """Mean BCE at the label cells of the first map of each pair.

    ``logits`` is (B, M, H, W); the softmax normalizes jointly over all
    M*H*W cells of each record. Differentiable; numerics match
    ``softmax3d`` + ``bce_at_pixel``.
    """
    b, m, h, w = logits.shape
    flat = logits.reshape(b, m * h * w)
    logp = torch.log_softmax(flat, dim=1)
    lp = logp.gather(1, (rows * w + cols).reshape(b, 1)).squeeze(1)
    lp = lp.clamp(min=math.log(PROB_CLAMP))
    p = lp.exp().clamp(max=1.0 - PROB_CLAMP)
    losses = torch.where(ys > 0.5, -lp, -torch.log1p(-p))
    return losses.mean()


def _split_val_scenes(
    scene_ids: Sequence[str], val_fraction: float, seed: int
) -> tuple[set[str], set[str]]:
    """Scene-level validation split, never by record."""
    ids = sorted(scene_ids)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x7A1]))
    order = [ids[i] for i in rng.permutation(len(ids))]
    n_val = round(val_fraction * len(ids))
    n_val = min(n_val, len(ids) - 1)
    return set(order[n_val:]), set(order[:n_val])


def _to_items(records: Sequence[GraspRecord], grid: AngleGrid):
    rows = np.array([r.grasp.row for r in records], dtype=np.int64)
    cols = np.array([r.grasp.col for r in records], dtype=np.int64)
    phis = np.array([grid.angle(r.grasp.angle_index) for r in records], dtype=np.float32)
    ys = np.array([float(r.outcome) for r in records], dtype=np.float32)
    sids = [r.scene_id for r in records]
    return sids, rows, cols, phis, ys


def _run_training(
    config: TrainConfig,
    heightmaps: dict[str, Heightmap],
    epoch_records,  # (epoch, rng) -> list[GraspRecord]
    mode: str,
    role: str,
    grid: AngleGrid,
    val_fn=None,  # model -> float | None, called at each epoch end
    manifest: dict | None = None,
) -> tuple[DenseModel, EpochLog]:
    assert mode in ("pair", "sigmoid")
    # The joint softmax drives most of its 2*H*W probabilities toward the
    # denormal float range as training sharpens; x86 handles denormals via
    # microcode assists that slow the backward pass by an order of
    # magnitude. Flushing them to zero keeps step time flat (those
    # gradients are effectively zero anyway).
    torch.set_flush_denormal(True)
    model = DenseModel.create(config.model, seed=config.seed)
    model.manifest.update(manifest or {})
    model.manifest["role"] = role
    opt = torch.optim.Adam(
        model.net.parameters(), lr=config.lr, weight_decay=config.weight_decay
    )
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0x7E4]))
    first = epoch_records(0, np.random.default_rng(np.random.SeedSequence([config.seed, 0xE9, 0])))
    steps_per_epoch = max(1, math.ceil(len(first) / config.batch_size))
    total_steps = config.epochs * steps_per_epoch
    bg = next(iter(heightmaps.values())).background_level if heightmaps else 0.0
    log = EpochLog()
    best_proxy, best_state, best_epoch = -1.0, None, None
    step = 0
    for epoch in range(config.epochs):
        timers = {"data": 0.0, "forward": 0.0, "backward": 0.0, "val": 0.0}
        epoch_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0xE9, epoch]))
        records = epoch_records(epoch, epoch_rng)
        sids, rows, cols, phis, ys = _to_items(records, grid)
        perm = rng.permutation(len(records))
        model.net.train()
        losses, weights = [], []
        for start in range(0, len(records), config.batch_size):
            idx = perm[start : start + config.batch_size]
            lr = cosine_lr(min(step, total_steps), total_steps, config.lr, config.lr_min)
            for group in opt.param_groups:
                group["lr"] = lr
            t0 = time.perf_counter()
            raw = torch.from_numpy(np.stack([heightmaps[sids[i]].values for i in idx]))
            if mode == "pair":
                contrast = np.array(
                    [distant_angle(float(phis[i]), grid, rng) for i in idx],
                    dtype=np.float32,
                )
                angles = np.stack([phis[idx], contrast], axis=1).reshape(-1)
                raw2 = raw.repeat_interleave(2, dim=0)
                t1 = time.perf_counter()
                logits = rotated_score_batch(
                    model, raw2, torch.from_numpy(angles), bg, compiled=config.compile
                )
                b, h, w = len(idx), logits.shape[-2], logits.shape[-1]
                loss = joint_softmax_bce(
                    logits.reshape(b, 2, h, w),
                    torch.from_numpy(rows[idx]),
                    torch.from_numpy(cols[idx]),
                    torch.from_numpy(ys[idx]),
                )
            else:
                t1 = time.perf_counter()
                logits = rotated_score_batch(
                    model, raw, torch.from_numpy(phis[idx]), bg, compiled=config.compile
                )
                cell = logits[torch.arange(len(idx)), rows[idx], cols[idx]]
                # labels that leave the frame at their angle carry the
                # out-of-frame sentinel; clamp so they log as a bounded
                # loss (they contribute no gradient either way)
                cell = cell.clamp(-30.0, 30.0)
                loss = torch.nn.functional.binary_cross_entropy_with_logits(
                    cell, torch.from_numpy(ys[idx])
                )
            t2 = time.perf_counter()
            opt.zero_grad()
            loss.backward()
            opt.step()
            t3 = time.perf_counter()
            timers["data"] += t1 - t0
            timers["forward"] += t2 - t1
            timers["backward"] += t3 - t2
            losses.append(float(loss.detach()))
            weights.append(len(idx))
            step += 1
        mean_loss = float(np.average(losses, weights=weights))
        model.net.eval()
        t4 = time.perf_counter()
        proxy = val_fn(model) if val_fn is not None else None
        timers["val"] = time.perf_counter() - t4
        log.entries.append(EpochStats(epoch + 1, mean_loss, proxy, cosine_lr(
            min((epoch + 1) * steps_per_epoch, total_steps), total_steps, config.lr, config.lr_min
        )))
        if os.environ.get("GRASPKIT_TRAIN_VERBOSE"):
            spent = " ".join(f"{k}={v:.1f}s" for k, v in timers.items())
            print(
                f"[train pid={os.getpid()} {role} seed={config.seed}] "
                f"epoch {epoch + 1}/{config.epochs} loss={mean_loss:.3f} "
                f"proxy={proxy if proxy is None else round(proxy, 3)} "
                f"{spent} t={time.strftime('%H:%M:%S')}",
                flush=True,
            )
        if proxy is not None and proxy > best_proxy:
            best_proxy, best_epoch = proxy, epoch + 1
            best_state = {k: v.clone() for k, v in model.net.state_dict().items()}
    model.net.eval()
    if best_epoch is not None:
        model.manifest["best_val_epoch"] = best_epoch
        model.best_state_dict = best_state
    return model, log


def _proxy_val_fn(affordance: DenseModel | None, val_items, compiled: bool):
    if affordance is None or not val_items:
        return None
    from .evaluation import proxy_success_batch

    def val_fn(model: DenseModel) -> float:
        verdicts = proxy_success_batch(model, affordance, val_items, compiled=compiled)
        return float(np.mean(verdicts))

    return val_fn


def train_teacher(
    dataset: Dataset,
    config: TrainConfig = TrainConfig(),
    affordance: DenseModel | None = None,
    grid: AngleGrid | None = None,
) -> tuple[DenseModel, EpochLog]:
    """Behavioral cloning on labeled grasp records (contrastive angle pair).

    10% of scenes are held out; when an affordance model is supplied the
    per-epoch validation success-rate proxy is logged from them.
    """
    if not dataset.records:
        raise ValueError("teacher training needs a non-empty labeled dataset")
    if dataset.positives() == 0:
        raise ValueError("teacher training needs at least one successful grasp")
    g = grid if grid is not None else AngleGrid(dataset.angle_grid_size)
    labeled_scenes = {r.scene_id for r in dataset.records}
    train_ids, val_ids = _split_val_scenes(labeled_scenes, config.val_fraction, config.seed)
    train_records = [r for r in dataset.records if r.scene_id in train_ids]
    val_records = [r for r in dataset.records if r.scene_id in val_ids]
    val_items = [
        (dataset.heightmaps[r.scene_id], g.angle(r.grasp.angle_index)) for r in val_records
    ]
    manifest = {"trained_on": content_hash(dataset)[:16], "train_records": len(train_records)}
    return _run_training(
        config,
        dataset.heightmaps,
        lambda epoch, rng: train_records,
        "pair",
        "teacher",
        g,
        _proxy_val_fn(affordance, val_items, config.compile),
        manifest,
    )


def train_student(
    teacher: DenseModel,
    unlabeled: Dataset,
    config: TrainConfig = TrainConfig(),
    k_angles: int = 16,
    pseudo: PseudoLabelConfig | None = None,
    pseudo_records: list[GraspRecord] | None = None,
    affordance: DenseModel | None = None,
    grid: AngleGrid | None = None,
) -> tuple[DenseModel, EpochLog]:
    """Distill the teacher: its best-scored grasps become positive labels.

    Pseudo-labels are extracted once from the frozen teacher (or passed in
    pre-computed) and then trained on exactly like teacher data with y = 1.
    """
    if not unlabeled.heightmaps:
        raise ValueError("student training needs unlabeled scenes")
    g = grid if grid is not None else AngleGrid(unlabeled.angle_grid_size)
    ws = workspace_for(next(iter(unlabeled.heightmaps.values())))
    if pseudo is None:
        pseudo = PseudoLabelConfig(
            k_angles=k_angles, n_labels=1, ban_radius_px=max(1, ws.stroke_px // 2)
        )
    if pseudo_records is None:
        pseudo_records = generate_pseudo_labels(
            unlabeled.heightmaps,
            teacher,
            pseudo,
            seed=config.seed,
            grid=g,
            compiled=config.compile,
        )
    train_ids, val_ids = _split_val_scenes(
        unlabeled.heightmaps.keys(), config.val_fraction, config.seed
    )
    train_records = [r for r in pseudo_records if r.scene_id in train_ids]
    val_items = [
        (unlabeled.heightmaps[r.scene_id], g.angle(r.grasp.angle_index))
        for r in pseudo_records
        if r.scene_id in val_ids
    ]
    pseudo_ds = Dataset("pseudo", dict(unlabeled.heightmaps), pseudo_records, g.size)
    manifest = {
        "trained_on": content_hash(pseudo_ds)[:16],
        "teacher": teacher.fingerprint(),
        "k_angles": pseudo.k_angles,
        "n_labels": pseudo.n_labels,
        "train_records": len(train_records),
    }
    return _run_training(
        config,
        unlabeled.heightmaps,
        lambda epoch, rng: train_records,
        "pair",
        "student",
        g,
        _proxy_val_fn(affordance, val_items, config.compile),
        manifest,
    )


def train_affordance(
    dataset: Dataset,
    config: TrainConfig = TrainConfig(batch_size=16),
    grid: AngleGrid | None = None,
) -> tuple[DenseModel, EpochLog]:
    """Per-pixel grasp-success probability model on all available records.

    Classes are rebalanced by oversampling each epoch; no contrast angle
    and no joint softmax — scores pass through a per-pixel sigmoid. The
    logged validation metric is balanced accuracy on held-out scenes.
    """
    if dataset.positives() == 0 or dataset.negatives() == 0:
        raise ValueError("affordance training needs both outcome classes")
    g = grid if grid is not None else AngleGrid(dataset.angle_grid_size)
    cfg = replace(config, model=replace(config.model, head="sigmoid"))
    labeled_scenes = {r.scene_id for r in dataset.records}
    train_ids, val_ids = _split_val_scenes(labeled_scenes, cfg.val_fraction, cfg.seed)
    train_records = [r for r in dataset.records if r.scene_id in train_ids]
    val_records = [r for r in dataset.records if r.scene_id in val_ids]
    if not any(r.outcome for r in train_records) or not any(
        not r.outcome for r in train_records
    ):
        train_records = list(dataset.records)  # tiny dataset: skip the holdout

    def epoch_records(epoch, rng):
        return balanced_resample(train_records, rng)

    def val_fn(model: DenseModel) -> float | None:
        truth = [r.outcome for r in val_records]
        if not val_records or all(truth) or not any(truth):
            return None
        preds = predict_affordance(model, dataset.heightmaps, val_records, g, cfg.compile)
        return balanced_accuracy(truth, preds)

    manifest = {"trained_on": content_hash(dataset)[:16], "train_records": len(train_records)}
    return _run_training(
        cfg, dataset.heightmaps, epoch_records, "sigmoid", "affordance", g, val_fn, manifest
    )


def predict_affordance(
    affordance: DenseModel,
    heightmaps: dict[str, Heightmap],
    records: Sequence[GraspRecord],
    grid: AngleGrid | None = None,
    compiled: bool = False,
    batch_size: int = 16,
) -> list[bool]:
    """Sigmoid verdict at each record's own cell and angle."""
    g = grid if grid is not None else AngleGrid()
    out: list[bool] = []
    for i in range(0, len(records), batch_size):
        chunk = records[i : i + batch_size]
        raw = torch.from_numpy(np.stack([heightmaps[r.scene_id].values for r in chunk]))
        angles = torch.tensor([g.angle(r.grasp.angle_index) for r in chunk])
        bg = heightmaps[chunk[0].scene_id].background_level
        with torch.no_grad():
            logits = rotated_score_batch(affordance, raw, angles, bg, compiled=compiled)
        for j, r in enumerate(chunk):
            out.append(float(logits[j, r.grasp.row, r.grasp.col]) > 0.0)
    return out


def balanced_accuracy(truth: Sequence[bool], preds: Sequence[bool]) -> float:
    """Mean of true-positive and true-negative rates."""
    t = np.asarray(truth, dtype=bool)
    p = np.asarray(preds, dtype=bool)
    if t.all() or (~t).all():
        raise ValueError("balanced accuracy needs both classes in the truth")
    tpr = (p & t).sum() / t.sum()
    tnr = (~p & ~t).sum() / (~t).sum()
    return float((tpr + tnr) / 2)
