"""Command-line surface: data generation, pretraining, training, evaluation,
tagging, and hyperparameter sweeps."""

from __future__ import annotations

import json
import sys
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from .config import ModelConfig, desk_config, validate_config
from .data import PROFILES, generate_corpus, load_dataset, corpus_stats
from .die import pretrain_die, save_pretrain_corpus
from .io import load_model, save_model
from .training import evaluate_model, predict_scores, train

VARIANT_ALIASES = {"full": "full", "text": "text_only", "image": "image_only"}

_CFG_FIELDS = ("dim", "clusters", "hidden", "tau1", "tau2", "pi", "alpha",
               "epochs", "lr_start", "lr_end", "seed", "variant")


def config_options(fn):
    opts = [
        click.option("--config", "config_path", type=click.Path(exists=True), default=None,
                     help="JSON config file; flags override its values."),
        click.option("--seed", type=int, default=None),
        click.option("--dim", type=int, default=None, help="Embedding dimension D."),
        click.option("--clusters", type=int, default=None, help="Cluster count K."),
        click.option("--hidden", type=int, default=None, help="Modality representation dim H."),
        click.option("--tau1", type=float, default=None),
        click.option("--tau2", type=float, default=None),
        click.option("--pi", type=float, default=None),
        click.option("--alpha", type=float, default=None),
        click.option("--epochs", type=int, default=None),
        click.option("--lr-start", type=float, default=None),
        click.option("--lr-end", type=float, default=None),
        click.option("--variant", type=click.Choice(list(VARIANT_ALIASES)), default=None),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


def build_config(config_path, **flags) -> ModelConfig:
    """Desk-scale defaults <- config file <- explicit flags."""
    values: dict = {}
    if config_path:
        values.update(json.loads(Path(config_path).read_text(encoding="utf-8")))
    renames = {"dim": "D", "clusters": "K", "hidden": "H"}
    for key in _CFG_FIELDS:
        val = flags.get(key)
        if val is not None:
            values[renames.get(key, key)] = val
    if "variant" in values:
        values["variant"] = VARIANT_ALIASES.get(values["variant"], values["variant"])
    cfg = desk_config(**{k: v for k, v in values.items()})
    return validate_config(cfg)


@click.group()
def main():
    """Multi-modal POI tagging pipeline."""


@main.command("gen-data")
@click.option("--profile", type=click.Choice(sorted(PROFILES)), default="desk")
@click.option("--out", required=True, type=click.Path())
@click.option("--seed", type=int, default=0)
def gen_data(profile, out, seed):
    """Generate a synthetic dataset."""
    spec = replace(PROFILES[profile], seed=seed)
    dataset = generate_corpus(spec, out)
    stats = corpus_stats(dataset.pois, len(dataset.tags))
    for key, val in stats.items():
        click.echo(f"{key}: {val}")


@main.command("pretrain-die")
@click.option("--data-dir", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@config_options
def pretrain_die_cmd(data_dir, out, config_path, **flags):
    """Pretrain the domain-adaptive image encoder on (image, tag) pairs."""
    cfg = build_config(config_path, **flags)
    dataset = load_dataset(data_dir)
    rng = np.random.default_rng(cfg.seed)
    pairs, records = [], []
    for poi in dataset.split("train"):
        gold = sorted(poi.gold_tags)
        for img in poi.images:
            tag = dataset.tags.tags[gold[int(rng.integers(len(gold)))]]
            pairs.append((img.grid, tag))
            records.append({"poi_id": poi.poi_id, "image_ref": img.source_id, "tag": tag})
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_pretrain_corpus(records, out_dir / "pretrain_corpus.jsonl")
    model, history = pretrain_die(pairs, dataset.tokens, cfg, dataset.G, dataset.C,
                                  log_path=out_dir / "pretrain_log.txt")
    save_model(model, out_dir / "die_checkpoint", step=len(history))
    click.echo(f"pretrained on {len(pairs)} pairs, {len(history)} steps")


@main.command("train")
@click.option("--data-dir", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--die", "die_path", type=click.Path(exists=True), default=None,
              help="DIE checkpoint to initialize the image backbone from.")
@config_options
def train_cmd(data_dir, out, die_path, config_path, **flags):
    """Train the tagging model end to end."""
    cfg = build_config(config_path, **flags)
    dataset = load_dataset(data_dir)
    backbone_state = None
    if die_path:
        die_model, _ = load_model(die_path)
        backbone_state = die_model.backbone.state_dict()
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    model, state = train(dataset, cfg, backbone_state=backbone_state,
                         log_path=out_dir / "train_log.txt")
    save_model(model, out_dir / "checkpoint", step=state.step)
    click.echo(f"trained {state.step} steps, best val F1-e {state.best_val_f1e:.4f}")


def run_eval(model_path, data_dir, split="test", pi=None, variant=None,
             out_path=None):
    """Evaluate a trained model; returns the EvalReport."""
    model, _ = load_model(model_path)
    if variant is not None:
        model.cfg = replace(model.cfg, variant=VARIANT_ALIASES.get(variant, variant))
    dataset = load_dataset(data_dir)
    report = evaluate_model(model, dataset.split(split), dataset, pi=pi)
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(report.to_dict(), sort_keys=True) + "\n")
    return report


@main.command("eval")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--data-dir", required=True, type=click.Path(exists=True))
@click.option("--out", type=click.Path(), default=None)
@click.option("--split", type=click.Choice(["train", "val", "test"]), default="test")
@config_options
def eval_cmd(model_path, data_dir, out, split, config_path, **flags):
    """Print the full metric report for a trained model."""
    try:
        report = run_eval(model_path, data_dir, split=split, pi=flags.get("pi"),
                          variant=flags.get("variant"), out_path=out)
    except (FileNotFoundError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    click.echo(report.format())


@main.command("tag")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--data-dir", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--split", type=click.Choice(["train", "val", "test"]), default="test")
@config_options
def tag_cmd(model_path, data_dir, out, split, config_path, **flags):
    """Score every vocabulary tag for each POI; one JSON record per line."""
    model, _ = load_model(model_path)
    pi = flags.get("pi") if flags.get("pi") is not None else model.cfg.pi
    dataset = load_dataset(data_dir)
    pois = dataset.split(split)
    scores = predict_scores(model, pois, dataset)
    with open(out, "w", encoding="utf-8") as fh:
        for poi, row in zip(pois, scores):
            order = sorted(range(len(row)), key=lambda i: (-row[i], i))
            for i in order:
                fh.write(json.dumps({
                    "poi_id": poi.poi_id, "tag": dataset.tags.tags[i],
                    "score": float(row[i]), "accepted": bool(row[i] > pi),
                }, sort_keys=True) + "\n")
    click.echo(f"wrote {len(pois) * len(dataset.tags)} records to {out}")


def run_sweep(parameter, grid, dataset, base_cfg, model=None, die_state=None):
    """Metric table per grid point.

    pi: re-threshold a single trained model; tau1: retrain per point.
    """
    if parameter not in ("tau1", "pi"):
        raise ValueError(f"unknown sweep parameter {parameter!r}")
    if not grid:
        raise ValueError("empty grid")
    test = dataset.split("test")
    rows = []
    if parameter == "pi":
        if model is None:
            model, _ = train(dataset, base_cfg, backbone_state=die_state)
        for point in grid:
            report = evaluate_model(model, test, dataset, pi=point)
            rows.append({"pi": point, **report.to_dict()})
    else:
        for point in grid:
            cfg = validate_config(replace(base_cfg, tau1=point))
            trained, _ = train(dataset, cfg, backbone_state=die_state)
            report = evaluate_model(trained, test, dataset)
            rows.append({"tau1": point, **report.to_dict()})
    return rows


@main.command("sweep")
@click.option("--param", "parameter", type=click.Choice(["tau1", "pi"]), required=True)
@click.option("--grid", required=True, help="Comma-separated grid values.")
@click.option("--data-dir", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--model", "model_path", type=click.Path(exists=True), default=None,
              help="Trained checkpoint to reuse for the pi sweep.")
@click.option("--die", "die_path", type=click.Path(exists=True), default=None)
@config_options
def sweep_cmd(parameter, grid, data_dir, out, model_path, die_path, config_path, **flags):
    """Sweep tau1 (retrains per point) or pi (re-thresholds one model)."""
    cfg = build_config(config_path, **flags)
    dataset = load_dataset(data_dir)
    points = [float(x) for x in grid.split(",") if x.strip()]
    model = None
    if model_path:
        model, _ = load_model(model_path)
    die_state = None
    if die_path:
        die_model, _ = load_model(die_path)
        die_state = die_model.backbone.state_dict()
    rows = run_sweep(parameter, points, dataset, cfg, model=model, die_state=die_state)
    with open(out, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    header = [parameter, "F1-e", "M-F1", "mAP"]
    click.echo("\t".join(header))
    for row in rows:
        click.echo("\t".join(f"{row[h]:.4f}" for h in header))


if __name__ == "__main__":
    main()
