"""Command-line entry points for every pipeline stage.

One binary with subcommands; flags override an optional JSON config file
(--config); every run writes its resolved configuration next to its
outputs so results are reproducible from the run directory alone.
"""

from __future__ import annotations

import json
import sys
from dataclasses import asdict
from pathlib import Path

import click
import numpy as np

from .datastore import Dataset, load_dataset, save_dataset, save_scene
from .geometry import AngleGrid, WorkspaceGeometry
from .pipeline import (
    DEFAULT_FRACTIONS,
    DEFAULT_SEEDS,
    PAPER_ANGLE_COUNTS,
    PAPER_TOP_NS,
    PipelineConfig,
    angle_sweep,
    label_scaling_sweep,
    save_config,
    topn_sweep,
)
from .pseudolabel import PseudoLabelConfig, generate_pseudo_labels
from .sim import (
    collect_experience,
    mixed_policy,
    oracle_policy,
    random_policy,
    render_heightmap,
    spawn_scene,
)
from .training import TrainConfig, train_affordance, train_student, train_teacher

GRID = AngleGrid(64)


def _fail(message: str, code: int = 1):
    click.echo(json.dumps({"error": message}), err=True)
    sys.exit(code)


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    with open(path) as f:
        return json.load(f)


def _write_resolved(out: Path, resolved: dict):
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "cli-config.json", "w") as f:
        json.dump(resolved, f, indent=2, sort_keys=True, default=str)
        f.write("\n")


def _train_config(overrides: dict, side_px: int, seed: int, batch_size: int = 8) -> TrainConfig:
    from .model import DenseModelConfig

    kw = dict(
        epochs=overrides.get("epochs", 30),
        lr=overrides.get("lr", 1e-3),
        batch_size=overrides.get("batch_size", batch_size),
        seed=seed,
        compile=overrides.get("compile", False),
        model=DenseModelConfig(
            input_size=side_px, channels=tuple(overrides.get("channels", (8, 16, 32, 64)))
        ),
    )
    return TrainConfig(**kw)


def _policy_for(name: str, side_px: int):
    if name == "oracle":
        return oracle_policy(GRID), "oracle"
    if name == "random":
        return random_policy(GRID), "robot"
    if name == "mixed":
        return mixed_policy([oracle_policy(GRID), random_policy(GRID)], [0.5, 0.5]), "robot"
    if name.startswith("model:"):
        from .evaluation import model_policy
        from .model import load_checkpoint

        model = load_checkpoint(name.split(":", 1)[1])
        if model.config.input_size != side_px:
            _fail(
                f"checkpoint expects {model.config.input_size}px scenes "
                f"but the run is configured for {side_px}px"
            )
        return model_policy(model, GRID), "robot"
    _fail(f"unknown policy {name!r}; use oracle, random, mixed, or model:PATH", 2)


@click.group()
def main():
    """Semi-supervised grasping toolkit."""


@main.command("gen-scenes")
@click.option("--count", type=int, required=True, help="number of scenes")
@click.option("--blocks", type=int, required=True, help="blocks per scene")
@click.option("--seed", type=int, default=0)
@click.option("--side", "side_px", type=int, default=128)
@click.option("--out", type=click.Path(), required=True)
def gen_scenes(count, blocks, seed, side_px, out):
    """Spawn scenes; write scene files + rendered heightmaps."""
    if count < 1 or not 1 <= blocks <= 50:
        _fail("count must be >= 1 and blocks in [1, 50]", 2)
    ws = WorkspaceGeometry(side_px=side_px)
    out = Path(out)
    heightmaps = {}
    for i in range(count):
        ss = np.random.SeedSequence([seed, i])
        scene = spawn_scene(int(ss.generate_state(1)[0]), blocks, ws, scene_id=f"gen-{i:05d}")
        save_scene(scene, out / "scenes" / f"{scene.scene_id}.json")
        heightmaps[scene.scene_id] = render_heightmap(scene)
    save_dataset(Dataset("scenes", heightmaps, [], GRID.size), out)
    _write_resolved(out, {"command": "gen-scenes", "count": count, "blocks": blocks,
                          "seed": seed, "side_px": side_px})
    click.echo(f"wrote {count} scenes to {out}")


@main.command()
@click.option("--policy", default="oracle", help="oracle | random | mixed | model:PATH")
@click.option("--scenes", type=int, required=True)
@click.option("--seed", type=int, default=0)
@click.option("--side", "side_px", type=int, default=128)
@click.option("--blocks-min", type=int, default=1)
@click.option("--blocks-max", type=int, default=39)
@click.option("--max-records", type=int, default=None)
@click.option("--out", type=click.Path(), required=True)
def collect(policy, scenes, seed, side_px, blocks_min, blocks_max, max_records, out):
    """Roll grasping epochs under a policy; write the resulting dataset."""
    pol, provenance = _policy_for(policy, side_px)
    ws = WorkspaceGeometry(side_px=side_px)
    records, heightmaps = collect_experience(
        scenes, pol, seed, tag=f"col{seed}", blocks_range=(blocks_min, blocks_max),
        workspace=ws, grid=GRID, provenance=provenance, max_records=max_records,
    )
    out = Path(out)
    save_dataset(Dataset(f"collect-{policy}", heightmaps, records, GRID.size), out)
    _write_resolved(out, {"command": "collect", "policy": policy, "scenes": scenes,
                          "seed": seed, "side_px": side_px,
                          "blocks": [blocks_min, blocks_max], "max_records": max_records})
    n_pos = sum(r.outcome for r in records)
    click.echo(f"collected {len(records)} records ({n_pos} successes) into {out}")


@main.command("train-teacher")
@click.option("--data", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--seed", type=int, default=0)
@click.option("--epochs", type=int, default=None)
@click.option("--affordance", type=click.Path(exists=True), default=None)
def cmd_train_teacher(data, out, config_path, seed, epochs, affordance):
    """Teacher imitation training on a labeled dataset."""
    overrides = _load_config_file(config_path)
    if epochs is not None:
        overrides["epochs"] = epochs
    dataset = load_dataset(data)
    side = next(iter(dataset.heightmaps.values())).side_px if dataset.heightmaps else 128
    config = _train_config(overrides, side, seed)
    afford = None
    if affordance:
        from .model import load_checkpoint

        afford = load_checkpoint(affordance)
    try:
        model, log = train_teacher(dataset, config, affordance=afford, grid=GRID)
    except ValueError as e:
        _fail(str(e))
    from .pipeline import _write_training_run

    _write_training_run(Path(out), model, log, config, {"stage": "teacher", "data": str(data)})
    click.echo(f"teacher trained ({config.epochs} epochs); final loss "
               f"{log.entries[-1].mean_loss:.4f}; run dir {out}")


@main.command("pseudo-label")
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--data", type=click.Path(exists=True), required=True, help="unlabeled dataset")
@click.option("--angles", "k_angles", type=int, default=16)
@click.option("--top-n", "n_labels", type=int, default=1)
@click.option("--seed", type=int, default=0)
@click.option("--out", type=click.Path(), required=True)
def cmd_pseudo_label(model_path, data, k_angles, n_labels, seed, out):
    """Extract teacher-argmax pseudo-labels from unlabeled scenes."""
    from .model import load_checkpoint

    model = load_checkpoint(model_path)
    dataset = load_dataset(data)
    ws = WorkspaceGeometry(
        side_px=next(iter(dataset.heightmaps.values())).side_px
    ) if dataset.heightmaps else None
    try:
        records = generate_pseudo_labels(
            dataset.heightmaps, model,
            PseudoLabelConfig(k_angles, n_labels, max(1, ws.stroke_px // 2) if ws else 32),
            seed=seed, workspace=ws, grid=GRID,
        )
    except ValueError as e:
        _fail(str(e))
    out = Path(out)
    save_dataset(Dataset("pseudo", dict(dataset.heightmaps), records, GRID.size), out)
    _write_resolved(out, {"command": "pseudo-label", "model": str(model_path),
                          "angles": k_angles, "top_n": n_labels, "seed": seed})
    click.echo(f"wrote {len(records)} pseudo-labels to {out}")


@main.command("train-student")
@click.option("--teacher", "teacher_path", type=click.Path(exists=True), required=True)
@click.option("--data", type=click.Path(exists=True), required=True, help="unlabeled dataset")
@click.option("--pseudo", type=click.Path(exists=True), default=None,
              help="pre-computed pseudo-label dataset")
@click.option("--angles", "k_angles", type=int, default=16)
@click.option("--top-n", "n_labels", type=int, default=1)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--seed", type=int, default=0)
@click.option("--epochs", type=int, default=None)
@click.option("--affordance", type=click.Path(exists=True), default=None)
@click.option("--out", type=click.Path(), required=True)
def cmd_train_student(teacher_path, data, pseudo, k_angles, n_labels, config_path, seed,
                      epochs, affordance, out):
    """Distill a teacher into a student via pseudo-labels."""
    from .model import load_checkpoint

    overrides = _load_config_file(config_path)
    if epochs is not None:
        overrides["epochs"] = epochs
    teacher = load_checkpoint(teacher_path)
    dataset = load_dataset(data)
    side = next(iter(dataset.heightmaps.values())).side_px
    config = _train_config(overrides, side, seed)
    afford = load_checkpoint(affordance) if affordance else None
    pseudo_records = load_dataset(pseudo).records if pseudo else None
    ws = WorkspaceGeometry(side_px=side)
    try:
        model, log = train_student(
            teacher, dataset, config,
            pseudo=PseudoLabelConfig(k_angles, n_labels, max(1, ws.stroke_px // 2)),
            pseudo_records=pseudo_records, affordance=afford, grid=GRID,
        )
    except ValueError as e:
        _fail(str(e))
    from .pipeline import _write_training_run

    _write_training_run(Path(out), model, log, config,
                        {"stage": "student", "teacher": str(teacher_path)})
    click.echo(f"student trained; run dir {out}")


@main.command("train-affordance")
@click.option("--data", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--seed", type=int, default=0)
@click.option("--epochs", type=int, default=None)
def cmd_train_affordance(data, out, config_path, seed, epochs):
    """Train the per-pixel grasp-success probability model."""
    overrides = _load_config_file(config_path)
    if epochs is not None:
        overrides["epochs"] = epochs
    dataset = load_dataset(data)
    side = next(iter(dataset.heightmaps.values())).side_px
    config = _train_config(overrides, side, seed, batch_size=16)
    try:
        model, log = train_affordance(dataset, config, grid=GRID)
    except ValueError as e:
        _fail(str(e))
    from .pipeline import _write_training_run

    _write_training_run(Path(out), model, log, config, {"stage": "affordance", "data": str(data)})
    val = [e.val_proxy for e in log.entries if e.val_proxy is not None]
    click.echo(f"affordance trained; final val balanced accuracy "
               f"{val[-1]:.3f}" if val else "affordance trained")


@main.command()
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--sim", is_flag=True, help="evaluate in the simulator")
@click.option("--attempts", type=int, default=2000)
@click.option("--seed", type=int, default=0)
@click.option("--blocks", type=int, default=50)
@click.option("--affordance", type=click.Path(exists=True), default=None,
              help="affordance checkpoint for proxy evaluation")
@click.option("--data", type=click.Path(exists=True), default=None,
              help="labeled dataset providing scenes+angles for proxy evaluation")
@click.option("--out", type=click.Path(), default=None)
def evaluate(model_path, sim, attempts, seed, blocks, affordance, data, out):
    """Success rate via simulator rollout or affordance proxy."""
    from .evaluation import evaluate_in_sim, proxy_success_batch, wilson_interval
    from .model import load_checkpoint

    model = load_checkpoint(model_path)
    if sim == (affordance is not None):
        _fail("pass exactly one of --sim or --affordance/--data", 2)
    if sim:
        ws = WorkspaceGeometry(side_px=model.config.input_size)
        report = evaluate_in_sim(model, attempts, seed, n_blocks=blocks, workspace=ws, grid=GRID)
        click.echo(
            f"success rate {report.rate:.4f} "
            f"[{report.wilson_low:.4f}, {report.wilson_high:.4f}] over {report.attempts} attempts"
        )
        if out:
            report.save(out)
    else:
        if not data:
            _fail("proxy evaluation needs --data", 2)
        afford = load_checkpoint(affordance)
        dataset = load_dataset(data)
        items = [
            (dataset.heightmaps[r.scene_id], GRID.angle(r.grasp.angle_index))
            for r in dataset.records
        ]
        if not items:
            _fail("dataset has no records to evaluate on")
        verdicts = proxy_success_batch(model, afford, items)
        rate = float(np.mean(verdicts))
        low, high = wilson_interval(int(np.sum(verdicts)), len(verdicts))
        click.echo(f"proxy success rate {rate:.4f} [{low:.4f}, {high:.4f}] "
                   f"over {len(verdicts)} records")
        if out:
            Path(out).parent.mkdir(parents=True, exist_ok=True)
            with open(out, "w") as f:
                json.dump({"rate": rate, "wilson": [low, high], "n": len(verdicts)}, f)
                f.write("\n")


@main.command()
@click.option("--sweep", type=click.Choice(["labels", "angles", "topn"]), required=True)
@click.option("--root", type=click.Path(), required=True, help="run directory (cached)")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="JSON overrides for PipelineConfig")
@click.option("--seeds", default=None, help="comma-separated training seeds")
@click.option("--workers", type=int, default=2)
def ablate(sweep, root, config_path, seeds, workers):
    """Run a paper-style ablation sweep; emits a table + plot-ready data."""
    import dataclasses

    overrides = _load_config_file(config_path)
    fields = {f.name for f in dataclasses.fields(PipelineConfig)}
    cfg_kw = {**asdict(PipelineConfig()), **{k: v for k, v in overrides.items() if k in fields}}
    for key in ("collect_blocks", "channels"):
        cfg_kw[key] = tuple(cfg_kw[key])
    cfg = PipelineConfig(**cfg_kw)
    root = Path(root)
    save_config(cfg, root)
    seed_list = tuple(int(s) for s in seeds.split(",")) if seeds else DEFAULT_SEEDS
    if sweep == "labels":
        fractions = tuple(overrides.get("fractions", DEFAULT_FRACTIONS))
        table = label_scaling_sweep(cfg, root, fractions, seed_list, workers)
    elif sweep == "angles":
        counts = tuple(overrides.get("angle_counts", PAPER_ANGLE_COUNTS))
        table = angle_sweep(cfg, root, counts, seed_list, workers=workers)
    else:
        ns = tuple(overrides.get("top_ns", PAPER_TOP_NS))
        table = topn_sweep(cfg, root, ns, seed_list, workers=workers)
    click.echo(json.dumps(table["rows"], indent=2))
    click.echo(f"table written under {root}/tables/")


@main.command("annotate-serve")
@click.option("--scenes", type=int, required=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--port", type=int, default=8321)
@click.option("--seed", type=int, default=0)
@click.option("--side", "side_px", type=int, default=128)
@click.option("--blocks-min", type=int, default=1)
@click.option("--blocks-max", type=int, default=12)
@click.option("--ui-dir", type=click.Path(), default=None,
              help="directory with the built annotation UI (served at /)")
def annotate_serve(scenes, out, port, seed, side_px, blocks_min, blocks_max, ui_dir):
    """Serve the annotation API (and optionally the browser UI)."""
    import uvicorn

    from .server import create_app

    ws = WorkspaceGeometry(side_px=side_px)
    app = create_app(out, scenes, seed, ws, (blocks_min, blocks_max), static_dir=ui_dir)
    _write_resolved(Path(out), {"command": "annotate-serve", "scenes": scenes, "seed": seed,
                                "side_px": side_px, "blocks": [blocks_min, blocks_max],
                                "port": port})
    try:
        uvicorn.run(app, host="127.0.0.1", port=port, log_level="warning")
    except OSError as e:
        _fail(f"cannot bind port {port}: {e}")


if __name__ == "__main__":
    main()
