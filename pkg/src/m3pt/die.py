"""Domain-adaptive image encoder pretraining.

The backbone is pretrained with three objectives: masked tag-token
prediction from the image, image-tag contrastive alignment, and a binary
image-tag matching head.  The overall pretraining loss is the unweighted
sum of the three.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from .config import ModelConfig
from .encoders import CrossAttention, ImageBackbone, TextEncoder
from .vocab import MASK, TokenVocab

DEFAULT_TEMPLATES = ["this is a {}", "a photo of {}"]


@dataclass
class MaskedSample:
    """A sentence containing a gold tag, with one tag token masked out."""

    image: np.ndarray
    tokens: list[int]          # x_v, the full sentence
    masked_tokens: list[int]   # x~_v, same sentence with one [MASK]
    masked_pos: int
    target: int                # the replaced token id


def make_masked_sample(image: np.ndarray, tag: str, template: str,
                       tokens: TokenVocab, rng: np.random.Generator) -> MaskedSample:
    """Expand ``template`` with ``tag`` and mask one tag token uniformly."""
    tag_ids = tokens.encode(tag)
    if not tag_ids:
        raise ValueError(f"tag {tag!r} tokenizes to nothing")
    sentence = tokens.encode(template.format(tag))
    # locate the tag's token span inside the expanded sentence
    span = None
    for start in range(len(sentence) - len(tag_ids) + 1):
        if sentence[start:start + len(tag_ids)] == tag_ids:
            span = start
            break
    if span is None:
        raise ValueError(f"tag {tag!r} absent from template expansion {template!r}")
    pos = span + int(rng.integers(len(tag_ids)))
    masked = list(sentence)
    target = masked[pos]
    masked[pos] = MASK
    return MaskedSample(image, sentence, masked, pos, target)


def similarity_image_to_tags(v_emb: torch.Tensor, tag_embs: torch.Tensor,
                             tau2: float) -> torch.Tensor:
    """Softmax over the paired tag set of v.t / tau2."""
    if tag_embs.shape[0] == 0:
        raise ValueError("empty paired tag set")
    if tau2 <= 0:
        raise ValueError("tau2 must be positive")
    return (tag_embs @ v_emb / tau2).softmax(dim=-1)


def similarity_tag_to_images(t_emb: torch.Tensor, image_embs: torch.Tensor,
                             tau2: float) -> torch.Tensor:
    if image_embs.shape[0] == 0:
        raise ValueError("empty paired image set")
    return similarity_image_to_tags(t_emb, image_embs, tau2)


def contrastive_loss(left: torch.Tensor, right: torch.Tensor, tau: float) -> torch.Tensor:
    """Symmetric in-batch InfoNCE: half the sum of both CE directions.

    left/right: (B, D) aligned pairs; row i of each side is the gold match
    of row i of the other, every other in-batch row is a negative.
    """
    if left.shape[0] == 0:
        raise ValueError("empty batch")
    if tau <= 0:
        raise ValueError("temperature must be positive")
    logits = left @ right.T / tau
    target = torch.arange(left.shape[0], device=left.device)
    ce = nn.functional.cross_entropy
    return 0.5 * (ce(logits, target, reduction="sum")
                  + ce(logits.T, target, reduction="sum"))


def binary_match_loss(probs: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Sum of binary cross-entropies against match probabilities in (0,1)."""
    if not ((labels == 0) | (labels == 1)).all():
        raise ValueError("labels must be in {0,1}")
    eps = torch.finfo(probs.dtype).tiny
    return -(labels * (probs + eps).log()
             + (1 - labels) * (1 - probs + eps).log()).sum()


class DieModel(nn.Module):
    """Image backbone plus its own text encoder and prediction/match heads."""

    def __init__(self, cfg: ModelConfig, n_tokens: int, grid_size: int, channels: int):
        super().__init__()
        self.cfg = cfg
        self.backbone = ImageBackbone(
            grid_size, channels, cfg.D, cfg.patch_size,
            cfg.n_layers, cfg.n_heads, cfg.ffn_mult, cfg.dropout,
        )
        self.text_encoder = TextEncoder(
            n_tokens, cfg.D, cfg.n_layers, cfg.n_heads, cfg.max_seq_len,
            cfg.ffn_mult, cfg.dropout,
        )
        self.cross_attn = CrossAttention(cfg.D)
        self.token_head = nn.Linear(cfg.D, n_tokens)
        self.match_head = nn.Linear(cfg.D, 2)

    def encode_image(self, grids: torch.Tensor) -> torch.Tensor:
        return self.backbone(grids)

    def predict_masked_token(self, v_emb: torch.Tensor, text_hidden: torch.Tensor,
                             text_mask=None) -> torch.Tensor:
        """Token distribution at [MASK]: cross-attend v over the masked text."""
        refined = self.cross_attn(v_emb.unsqueeze(1), text_hidden, text_mask)[:, 0]
        return self.token_head(refined).softmax(dim=-1)

    def match_image_tag(self, v_emb: torch.Tensor, t_emb: torch.Tensor) -> torch.Tensor:
        """Match probability in [0,1] per (image, tag) row."""
        if v_emb.shape[-1] != t_emb.shape[-1]:
            raise ValueError("image and tag embedding dims differ")
        refined = self.cross_attn(v_emb.unsqueeze(1), t_emb.unsqueeze(1))[:, 0]
        return self.match_head(refined).softmax(dim=-1)[:, 1]

    def loss_msk(self, grids: torch.Tensor, masked_tokens: torch.Tensor,
                 targets: torch.Tensor) -> torch.Tensor:
        if grids.shape[0] == 0:
            raise ValueError("empty batch")
        v = self.encode_image(grids)
        hidden = self.text_encoder.encode_tokens(masked_tokens)
        mask = torch.cat(
            [torch.zeros(grids.shape[0], 1, dtype=torch.bool), masked_tokens == 0], dim=1
        )
        probs = self.predict_masked_token(v, hidden, mask)
        eps = torch.finfo(probs.dtype).tiny
        picked = probs[torch.arange(len(targets)), targets]
        return -(picked + eps).log().sum()

    def loss_itc(self, v_embs: torch.Tensor, t_embs: torch.Tensor) -> torch.Tensor:
        return contrastive_loss(v_embs, t_embs, self.cfg.tau2)

    def loss_itm(self, v_embs: torch.Tensor, t_embs: torch.Tensor,
                 labels: torch.Tensor) -> torch.Tensor:
        return binary_match_loss(self.match_image_tag(v_embs, t_embs), labels)


def load_pretrain_corpus(path) -> list[dict]:
    """Read line-delimited ``{poi_id, image_ref, tag}`` records."""
    import json
    from pathlib import Path

    records = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            records.append({"poi_id": rec["poi_id"], "image_ref": rec["image_ref"],
                            "tag": rec["tag"]})
        except (ValueError, KeyError) as exc:
            raise ValueError(f"corpus line {lineno}: {exc}") from exc
    return records


def save_pretrain_corpus(records: list[dict], path) -> None:
    import json
    from pathlib import Path

    with open(Path(path), "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def pretrain_die(pairs: list[tuple[np.ndarray, str]], tokens: TokenVocab,
                 cfg: ModelConfig, grid_size: int, channels: int,
                 templates: list[str] | None = None, epochs: int | None = None,
                 log_path=None, model: DieModel | None = None,
                 lr_scale: float = 0.1) -> tuple[DieModel, list[dict]]:
    """Pretrain the image backbone on (image grid, gold tag) pairs.

    Returns the model and a per-step history of the three sub-losses.
    Aborts with a RuntimeError if the loss turns non-finite.

    ``lr_scale`` shrinks the configured learning rate for this phase: the
    contrastive logits are temperature-scaled raw dot products, and the
    end-to-end rate drives them into a collapsed uniform saddle.
    """
    from .encoders import pad_token_batch
    from .training import linear_lr

    templates = templates or DEFAULT_TEMPLATES
    rng = np.random.default_rng(cfg.seed)
    torch.manual_seed(cfg.seed)
    if model is None:
        model = DieModel(cfg, len(tokens), grid_size, channels)
    epochs = cfg.epochs if epochs is None else epochs

    opt = torch.optim.AdamW(model.parameters(), lr=cfg.lr_start * lr_scale,
                            weight_decay=cfg.weight_decay)
    n_batches = max(1, (len(pairs) + cfg.batch_size - 1) // cfg.batch_size)
    total_steps = epochs * n_batches
    history: list[dict] = []
    log_fh = open(log_path, "a", encoding="utf-8") if log_path else None

    step = 0
    for _ in range(epochs):
        order = rng.permutation(len(pairs))
        for b in range(n_batches):
            idx = order[b * cfg.batch_size:(b + 1) * cfg.batch_size]
            if len(idx) == 0:
                continue
            batch = [pairs[i] for i in idx]
            grids = torch.tensor(np.stack([img for img, _ in batch]), dtype=torch.float32)

            samples = [
                make_masked_sample(img, tag, templates[int(rng.integers(len(templates)))],
                                   tokens, rng)
                for img, tag in batch
            ]
            masked = pad_token_batch([s.masked_tokens for s in samples])
            targets = torch.tensor([s.target for s in samples])

            v_embs = model.encode_image(grids)
            tag_ids = pad_token_batch([tokens.encode(tag) for _, tag in batch])
            t_embs = model.text_encoder(tag_ids)

            l_msk = model.loss_msk(grids, masked, targets)
            l_itc = model.loss_itc(v_embs, t_embs)

            # one random in-batch negative per positive
            neg = (np.arange(len(batch)) + 1 + rng.integers(max(1, len(batch) - 1)))
            neg = neg % len(batch) if len(batch) > 1 else np.zeros(1, dtype=int)
            itm_v = torch.cat([v_embs, v_embs])
            itm_t = torch.cat([t_embs, t_embs[neg]])
            labels = torch.cat([torch.ones(len(batch)), torch.zeros(len(batch))])
            l_itm = model.loss_itm(itm_v, itm_t, labels)

            loss = l_msk + l_itc + l_itm
            if not torch.isfinite(loss):
                raise RuntimeError(
                    f"pretraining diverged at step {step}: "
                    f"MSK={l_msk.item()} ITC={l_itc.item()} ITM={l_itm.item()}"
                )
            lr = lr_scale * linear_lr(cfg, step, total_steps)
            for group in opt.param_groups:
                group["lr"] = lr
            opt.zero_grad()
            loss.backward()
            opt.step()

            row = {"step": step, "L_MSK": l_msk.item(), "L_ITC": l_itc.item(),
                   "L_ITM": l_itm.item(), "L_DIE": loss.item()}
            history.append(row)
            if log_fh:
                log_fh.write(f"{step}, {row['L_MSK']:.6f}, {row['L_ITC']:.6f}, "
                             f"{row['L_ITM']:.6f}, {row['L_DIE']:.6f}\n")
            step += 1
    if log_fh:
        log_fh.close()
    return model, history
