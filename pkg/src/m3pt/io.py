"""Saving and loading models through the checkpoint directory format."""

from __future__ import annotations

import numpy as np
import torch

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import config_from_manifest, config_to_manifest
from .die import DieModel
from .model import M3PT


def _state_to_arrays(module: torch.nn.Module) -> dict[str, np.ndarray]:
    return {k: v.detach().cpu().numpy() for k, v in module.state_dict().items()}


def _meta(model, kind: str, step: int) -> dict[str, str]:
    manifest = config_to_manifest(model.cfg)
    manifest.update({
        "model_kind": kind,
        "step": str(step),
        "n_tokens": str(model.text_encoder.n_tokens),
        "grid_size": str(_backbone(model).grid_size),
        "channels": str(_backbone(model).channels),
    })
    return manifest


def _backbone(model):
    return model.backbone if isinstance(model, DieModel) else model.image_backbone


def save_model(model, path, step: int = 0) -> None:
    kind = "die" if isinstance(model, DieModel) else "m3pt"
    save_checkpoint(_state_to_arrays(model), _meta(model, kind, step), path)


def load_model(path):
    """Rebuild a model from a checkpoint directory.

    Raises CheckpointError when blob shapes disagree with the manifest's
    config (e.g. a manifest edited to a different embedding dimension).
    """
    params, manifest = load_checkpoint(path)
    cfg = config_from_manifest(manifest)
    kind = manifest.get("model_kind")
    n_tokens = int(manifest["n_tokens"])
    grid_size = int(manifest["grid_size"])
    channels = int(manifest["channels"])
    if kind == "die":
        model = DieModel(cfg, n_tokens, grid_size, channels)
    elif kind == "m3pt":
        model = M3PT(cfg, n_tokens, grid_size, channels)
    else:
        raise CheckpointError(f"unknown model_kind {kind!r}")

    state = model.state_dict()
    if set(state) != set(params):
        raise CheckpointError("parameter names do not match the model")
    for name, tensor in state.items():
        if tuple(tensor.shape) != params[name].shape:
            raise CheckpointError(
                f"shape mismatch for {name}: checkpoint {params[name].shape}, "
                f"model (config) {tuple(tensor.shape)}"
            )
    model.load_state_dict({k: torch.from_numpy(v) for k, v in params.items()})
    return model, manifest
