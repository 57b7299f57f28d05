"""Trainable dense grasp scorer and its rotation-based SE(2) reconstruction.

The network ``g`` maps a normalized 1-channel heightmap to a same-size
logit map scoring horizontal grasps. Scores at an arbitrary angle come
from rotating the scene so that angle becomes horizontal, scoring, and
rotating the logits back:

    dense_scores(x, phi) = unrotate_phi(g(rotate_phi(x)))

Cells that fall outside the frame during the un-rotation carry no model
information and are filled with ``OUT_OF_FRAME_LOGIT`` so they take no
softmax mass and never win an argmax.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from scipy.special import logsumexp

from .geometry import (
    DEPTH_NORM_MAX_M,
    AngleGrid,
    Heightmap,
    distant_angle,
    normalize_depth,
)

CHECKPOINT_FORMAT_VERSION = 1
OUT_OF_FRAME_LOGIT = -1.0e4


@dataclass(frozen=True)
class DenseModelConfig:
    """Architecture + conditioning knobs of the dense scorer."""

    input_size: int = 128
    channels: tuple[int, ...] = (8, 16, 32, 64)
    head: str = "logits"  # "logits" (teacher/student) or "sigmoid" (affordance)
    angle_grid_size: int = 64

    def __post_init__(self):
        if self.head not in ("logits", "sigmoid"):
            raise ValueError(f"unknown head type {self.head!r}")
        if len(self.channels) < 2:
            raise ValueError("need at least two encoder levels")


class _EncoderDecoder(nn.Module):
    """Small fully-convolutional encoder-decoder with skip connections.

    All levels run at stride 2; the head predicts at half resolution and
    is upsampled bilinearly, keeping the output size equal to the input
    size. Inputs are reflect-padded to a multiple of the downsampling
    factor, so any square size (e.g. the native 338) works.
    """

    def __init__(self, channels: Sequence[int]):
        super().__init__()
        downs = []
        prev = 1
        for c in channels:
            downs.append(nn.Conv2d(prev, c, 3, stride=2, padding=1))
            prev = c
        self.downs = nn.ModuleList(downs)
        ups = []
        for c in list(channels)[-2::-1]:
            ups.append(nn.Conv2d(prev + c, c, 3, padding=1))
            prev = c
        self.ups = nn.ModuleList(ups)
        self.head = nn.Conv2d(prev, 1, 1)
        self.factor = 2 ** len(channels)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        size = x.shape[-1]
        pad = (-size) % self.factor
        if pad:
            x = F.pad(x, (0, pad, 0, pad), mode="reflect")
        skips = []
        for down in self.downs:
            x = F.relu(down(x))
            skips.append(x)
        for up, skip in zip(self.ups, skips[-2::-1]):
            x = F.interpolate(x, scale_factor=2, mode="nearest")
            x = F.relu(up(torch.cat([x, skip], dim=1)))
        x = F.interpolate(self.head(x), scale_factor=2, mode="bilinear", align_corners=True)
        if pad:
            x = x[..., : size, : size]
        return x


@dataclass(frozen=True)
class DenseScoreMap:
    """Per-pixel grasp logits at one closing-axis angle (original frame)."""

    values: np.ndarray
    angle: float

    def __post_init__(self):
        if not np.isfinite(self.values).all():
            raise ValueError("score map contains non-finite values")


@dataclass(frozen=True)
class AffordanceVolume:
    """H x W x K logits over K angles."""

    values: np.ndarray
    angles: tuple[float, ...]

    def __post_init__(self):
        if self.values.ndim != 3 or self.values.shape[2] != len(self.angles):
            raise ValueError("volume must be H x W x K with one angle per slice")
        if len(self.angles) < 1:
            raise ValueError("volume needs at least one angle")


class DenseModel:
    """Dense scorer: torch net + config + self-describing manifest."""

    def __init__(self, net: _EncoderDecoder, config: DenseModelConfig, manifest: dict | None = None):
        self.net = net
        self.config = config
        self.manifest = dict(manifest or {})
        self.manifest.setdefault("role", "untrained")
        self.manifest.setdefault("trained_on", None)
        self._compiled = None
        self.net.eval()

    @classmethod
    def create(cls, config: DenseModelConfig = DenseModelConfig(), seed: int = 0) -> "DenseModel":
        torch.manual_seed(seed)
        return cls(_EncoderDecoder(config.channels), config)

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.net.parameters())

    def net_fn(self, compiled: bool = False):
        if not compiled:
            return self.net
        if self._compiled is None:
            self._compiled = torch.compile(self.net)
        return self._compiled

    def fingerprint(self) -> str:
        """Stable hash of the current parameters."""
        import hashlib

        h = hashlib.sha256()
        for name, p in sorted(self.net.state_dict().items()):
            h.update(name.encode())
            h.update(p.detach().numpy().tobytes())
        return h.hexdigest()[:16]

    # -- inference ---------------------------------------------------------

    def _check_input(self, x: Heightmap | np.ndarray) -> None:
        side = x.side_px if isinstance(x, Heightmap) else x.shape[-1]
        if side != self.config.input_size:
            raise ValueError(
                f"input is {side}px but the model is configured for {self.config.input_size}px"
            )

    @torch.no_grad()
    def score_logits(self, x_norm: np.ndarray) -> np.ndarray:
        """Raw dense logits for an already-normalized input (no rotation)."""
        self._check_input(x_norm)
        t = torch.from_numpy(np.ascontiguousarray(x_norm, dtype=np.float32))
        out = self.net(t.unsqueeze(0).unsqueeze(0))
        return out[0, 0].numpy()

    @torch.no_grad()
    def forward_angles(
        self,
        x: Heightmap,
        angles: Sequence[float],
        compiled: bool = False,
        batch_size: int = 16,
    ) -> np.ndarray:
        """Stack of un-rotated logit maps, shape (K, H, W), one per angle."""
        self._check_input(x)
        raw = torch.from_numpy(x.values.astype(np.float32))
        phis = torch.tensor(list(angles), dtype=torch.float32)
        out = []
        for i in range(0, len(phis), batch_size):
            chunk = phis[i : i + batch_size]
            batch = raw.expand(len(chunk), -1, -1)
            logits = rotated_score_batch(
                self, batch, chunk, x.background_level, compiled=compiled
            )
            out.append(logits.numpy())
        return np.concatenate(out, axis=0)


def _rotation_grid(angles: torch.Tensor, size: int) -> torch.Tensor:
    """Sampling grid rotating map content by each angle about the center.

    Matches ``geometry.rotate_map``: output pixel o samples the input at
    R(-phi) (o - c) + c.
    """
    n = angles.shape[0]
    cos, sin = torch.cos(angles), torch.sin(angles)
    theta = torch.zeros(n, 2, 3, dtype=torch.float32)
    theta[:, 0, 0] = cos
    theta[:, 0, 1] = -sin
    theta[:, 1, 0] = sin
    theta[:, 1, 1] = cos
    return F.affine_grid(theta, (n, 1, size, size), align_corners=True)


def rotate_batch(maps: torch.Tensor, angles: torch.Tensor, fill: float = 0.0) -> tuple[torch.Tensor, torch.Tensor]:
    """Rotate a (N, H, W) batch per-sample; returns (rotated, valid mask)."""
    size = maps.shape[-1]
    grid = _rotation_grid(angles, size)
    shifted = (maps - fill).unsqueeze(1)
    out = F.grid_sample(shifted, grid, mode="bilinear", padding_mode="zeros", align_corners=True)
    valid = (grid.abs() <= 1.0 + 1e-6).all(dim=-1)
    return out.squeeze(1) + fill, valid


def rotated_score_batch(
    model: DenseModel,
    raw: torch.Tensor,
    angles: torch.Tensor,
    background_level: float = 0.0,
    compiled: bool = False,
    requires_grad: bool = False,
) -> torch.Tensor:
    """Rotate raw inputs, normalize, score, un-rotate the logits.

    The differentiable core shared by inference and the training loops.
    Exactly-zero angles skip the resampling so the zero-rotation identity
    is bit-exact.
    """
    net = model.net_fn(compiled)
    zero = bool((angles == 0.0).all())
    if zero:
        x = raw
    else:
        x, _ = rotate_batch(raw, angles, fill=background_level)
    x = ((x - background_level) / DEPTH_NORM_MAX_M).clamp(0.0, 1.0)
    logits = net(x.unsqueeze(1)).squeeze(1)
    if zero:
        return logits
    back, valid = rotate_batch(logits, -angles, fill=0.0)
    return torch.where(valid, back, torch.tensor(OUT_OF_FRAME_LOGIT))


# -- spec-level operations ---------------------------------------------------


def score(model: DenseModel, x_norm: np.ndarray) -> DenseScoreMap:
    """Dense logits of the normalized input at the canonical (horizontal) angle."""
    return DenseScoreMap(model.score_logits(x_norm), angle=0.0)


def forward(model: DenseModel, x: Heightmap, phi: float) -> DenseScoreMap:
    """Dense logits for closing-axis angle ``phi``, indexed in the original frame."""
    logits = model.forward_angles(x, [phi])[0]
    return DenseScoreMap(logits, angle=phi)


def forward_pair(
    model: DenseModel,
    x: Heightmap,
    phi: float,
    rng: np.random.Generator,
    grid: AngleGrid | None = None,
) -> list[DenseScoreMap]:
    """Score ``phi`` plus a contrast angle at least pi/4 away from it.

    Elements are computed one at a time so the first is bit-identical to
    a plain ``forward`` call.
    """
    g = grid if grid is not None else AngleGrid(model.config.angle_grid_size)
    phi2 = distant_angle(phi, g, rng)
    return [forward(model, x, phi), forward(model, x, phi2)]


def softmax3d(maps: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Joint softmax over every pixel of every map in the list.

    The result is one probability distribution spread across all cells of
    all maps (total mass 1), stabilized by max subtraction.
    """
    if len(maps) == 0:
        raise ValueError("softmax3d needs at least one map")
    shapes = {m.shape for m in maps}
    if len(shapes) != 1:
        raise ValueError(f"maps must share a shape, got {shapes}")
    stack = np.stack([np.asarray(m, dtype=np.float64) for m in maps])
    z = stack - stack.max()
    e = np.exp(z)
    e /= e.sum()
    return [e[i] for i in range(len(maps))]


def affordance_volume(
    model: DenseModel,
    x: Heightmap,
    angles: Sequence[float],
    compiled: bool = False,
    batch_size: int = 1,
) -> AffordanceVolume:
    """Stack dense score maps over the given angles, shape H x W x K.

    The default batch size of 1 makes every slice bit-identical to an
    independent ``forward`` call; hot paths pass a larger batch, which may
    reorder float ops at the 1e-7 level.
    """
    if len(angles) == 0:
        raise ValueError("affordance volume needs at least one angle")
    stack = model.forward_angles(x, angles, compiled=compiled, batch_size=batch_size)
    return AffordanceVolume(np.moveaxis(stack, 0, -1), tuple(float(a) for a in angles))


def output_entropy(model: DenseModel, x: Heightmap, angles: Sequence[float]) -> float:
    """Shannon entropy (nats) of the joint softmax over the full volume."""
    vol = affordance_volume(model, x, angles)
    logits = vol.values.astype(np.float64).ravel()
    log_z = logsumexp(logits)
    log_p = logits - log_z
    p = np.exp(log_p)
    return float(-(p * log_p).sum())


# -- checkpoints --------------------------------------------------------------


def save_checkpoint(model: DenseModel, path: str | Path, manifest_extra: dict | None = None) -> None:
    """Write a single-file, self-describing checkpoint."""
    manifest = dict(model.manifest)
    if manifest_extra:
        manifest.update(manifest_extra)
    manifest["angle_grid_size"] = model.config.angle_grid_size
    manifest["depth_norm_max_m"] = DEPTH_NORM_MAX_M
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config": asdict(model.config),
        "manifest": manifest,
        "state_dict": model.net.state_dict(),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)


def load_checkpoint(path: str | Path) -> DenseModel:
    payload = torch.load(Path(path), map_location="cpu", weights_only=False)
    version = payload.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format version {version!r}")
    cfg_dict = dict(payload["config"])
    cfg_dict["channels"] = tuple(cfg_dict["channels"])
    config = DenseModelConfig(**cfg_dict)
    net = _EncoderDecoder(config.channels)
    net.load_state_dict(payload["state_dict"])
    return DenseModel(net, config, payload["manifest"])
