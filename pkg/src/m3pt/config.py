"""Model configuration and validation."""

from __future__ import annotations

from dataclasses import dataclass, fields

VARIANTS = ("full", "text_only", "image_only")


@dataclass(frozen=True)
class ModelConfig:
    """Hyperparameters of the tagging model.

    Defaults are the published full-scale settings; use ``desk_config`` for
    the small profile the test suite trains.
    """

    D: int = 768            # embedding dimension
    K: int = 64             # cluster count in the fusion module
    H: int = 414            # per-modality representation dimension
    tau1: float = 0.12      # temperature of the POI-tag contrastive loss
    tau2: float = 0.08      # temperature of the image-tag contrastive loss
    pi: float = 0.5         # acceptance threshold on the match probability
    alpha: float = 0.5      # weight of the contrastive term in the total loss
    lr_start: float = 1e-4
    lr_end: float = 1e-5
    epochs: int = 20
    seed: int = 0
    variant: str = "full"

    # architecture knobs (small from-scratch encoders)
    n_layers: int = 2
    n_heads: int = 1
    max_seq_len: int = 64
    patch_size: int = 4
    ffn_mult: int = 2
    dropout: float = 0.1

    # training knobs
    batch_size: int = 32
    negatives_per_positive: int = 3
    weight_decay: float = 0.01
    finetune_backbone: bool = True
    # train-time input corruption; counters POI memorization on small corpora
    aug_token_drop: float = 0.0
    aug_image_noise: float = 0.0


def desk_config(**overrides) -> ModelConfig:
    """Small configuration used by tests and CI-scale experiments."""
    base = dict(D=32, K=4, H=16, n_layers=1, n_heads=1, epochs=8,
                lr_start=3e-3, lr_end=3e-4,
                aug_token_drop=0.3, aug_image_noise=0.15)
    base.update(overrides)
    return ModelConfig(**base)


def validate_config(cfg: ModelConfig) -> ModelConfig:
    """Check every invariant; raises ValueError naming the first bad field."""
    if cfg.D <= 0:
        raise ValueError("D must be positive")
    if cfg.K <= 0:
        raise ValueError("K must be positive")
    if cfg.H <= 0:
        raise ValueError("H must be positive")
    if not cfg.tau1 > 0:
        raise ValueError("tau1 must be positive")
    if not cfg.tau2 > 0:
        raise ValueError("tau2 must be positive")
    if not 0.0 <= cfg.pi <= 1.0:
        raise ValueError("pi outside [0,1]")
    if cfg.alpha < 0:
        raise ValueError("alpha must be >= 0")
    if cfg.lr_start <= 0 or cfg.lr_end <= 0:
        raise ValueError("lr_start and lr_end must be positive")
    if cfg.epochs < 1:
        raise ValueError("epochs must be >= 1")
    if cfg.variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    if cfg.n_layers < 1:
        raise ValueError("n_layers must be >= 1")
    if cfg.D % cfg.n_heads != 0:
        raise ValueError("n_heads must divide D")
    if cfg.max_seq_len < 1:
        raise ValueError("max_seq_len must be >= 1")
    if cfg.patch_size < 1:
        raise ValueError("patch_size must be >= 1")
    if not 0.0 <= cfg.dropout < 1.0:
        raise ValueError("dropout outside [0,1)")
    if cfg.batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if cfg.negatives_per_positive < 0:
        raise ValueError("negatives_per_positive must be >= 0")
    if not 0.0 <= cfg.aug_token_drop < 1.0:
        raise ValueError("aug_token_drop outside [0,1)")
    if cfg.aug_image_noise < 0:
        raise ValueError("aug_image_noise must be >= 0")
    return cfg


def config_to_manifest(cfg: ModelConfig) -> dict:
    """Flatten a config into string key/value pairs for checkpoint manifests."""
    return {f"config.{f.name}": str(getattr(cfg, f.name)) for f in fields(cfg)}


def config_from_manifest(manifest: dict) -> ModelConfig:
    kwargs = {}
    for f in fields(ModelConfig):
        key = f"config.{f.name}"
        if key not in manifest:
            continue
        raw = manifest[key]
        if f.type in ("int", int):
            kwargs[f.name] = int(raw)
        elif f.type in ("float", float):
            kwargs[f.name] = float(raw)
        elif f.type in ("bool", bool):
            kwargs[f.name] = raw == "True"
        else:
            kwargs[f.name] = raw
    return ModelConfig(**kwargs)
