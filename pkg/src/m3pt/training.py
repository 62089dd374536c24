"""End-to-end training: matching loss plus weighted contrastive loss, AdamW
with linear learning-rate decay, per-epoch validation, best-checkpoint
retention."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .config import ModelConfig, validate_config
from .data import Dataset, PoiRecord
from .die import binary_match_loss
from .metrics import EvalReport, evaluate
from .model import M3PT
from .vocab import UNK, TokenVocab


@dataclass
class TrainState:
    step: int = 0
    lr: float = 0.0
    history: list[dict] = field(default_factory=list)
    best_val_f1e: float = -1.0
    best_state: dict | None = None


def linear_lr(cfg: ModelConfig, step: int, total_steps: int) -> float:
    """lr_start at step 0, lr_end at the final step, linear in between."""
    if total_steps <= 1:
        return cfg.lr_start
    frac = step / (total_steps - 1)
    return cfg.lr_start + (cfg.lr_end - cfg.lr_start) * min(1.0, frac)


def sample_negatives(gold: set[int], n_tags: int, rng: np.random.Generator,
                     n: int) -> list[int]:
    """Uniform non-gold tag ids, without replacement, deterministic per rng."""
    pool = np.setdiff1d(np.arange(n_tags), np.fromiter(gold, dtype=int, count=len(gold)))
    if n > len(pool):
        raise ValueError(f"cannot sample {n} negatives from {len(pool)} non-gold tags")
    return rng.choice(pool, size=n, replace=False).tolist()


def loss_ptm(model: M3PT, content: torch.Tensor, tag_embs: torch.Tensor,
             pair_poi: torch.Tensor, pair_tag: torch.Tensor,
             labels: torch.Tensor) -> torch.Tensor:
    """Sum of binary CEs over (POI, tag) pairs."""
    probs = model.match_poi_tag(content[pair_poi], tag_embs[pair_tag])
    return binary_match_loss(probs, labels)


def loss_ptc(content: torch.Tensor, tag_embs: torch.Tensor,
             gold_pairs: list[tuple[int, int]], pool_tags: list[int],
             tau1: float) -> torch.Tensor:
    """Symmetric contrastive loss between content and tag embeddings.

    For each gold (POI, tag) pair: CE of the POI's similarity over the
    pooled in-batch tag set, plus CE of the tag's similarity over the batch
    POIs, halved.
    """
    if tau1 <= 0:
        raise ValueError("tau1 must be positive")
    pool_index = {t: j for j, t in enumerate(pool_tags)}
    for _, t in gold_pairs:
        if t not in pool_index:
            raise ValueError(f"gold tag {t} missing from the contrast pool")
    pool_embs = tag_embs[torch.tensor(pool_tags, dtype=torch.long)]
    logits_pt = content @ pool_embs.T / tau1          # (B, |pool|)
    logits_tp = pool_embs @ content.T / tau1          # (|pool|, B)
    log_pt = logits_pt.log_softmax(dim=1)
    log_tp = logits_tp.log_softmax(dim=1)
    total = content.sum() * 0
    for p, t in gold_pairs:
        j = pool_index[t]
        total = total - 0.5 * (log_pt[p, j] + log_tp[j, p])
    return total


def total_loss(l_ptm: torch.Tensor, l_ptc: torch.Tensor, alpha: float) -> torch.Tensor:
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    return l_ptm + alpha * l_ptc


def _poi_inputs(pois: list[PoiRecord], tokens: TokenVocab):
    texts = [[tokens.encode(t) for t in p.texts] for p in pois]
    grids = [[img.grid for img in p.images] for p in pois]
    return texts, grids


def _corrupt_inputs(texts, grids, cfg: ModelConfig, rng: np.random.Generator):
    """Token dropout and image noise applied to one training batch."""
    if cfg.aug_token_drop > 0:
        texts = [
            [[UNK if rng.random() < cfg.aug_token_drop else tok for tok in seq]
             for seq in per_poi]
            for per_poi in texts
        ]
    if cfg.aug_image_noise > 0:
        grids = [
            [g + rng.normal(0.0, cfg.aug_image_noise, g.shape).astype(np.float32)
             for g in per_poi]
            for per_poi in grids
        ]
    return texts, grids


def evaluate_model(model: M3PT, pois: list[PoiRecord], dataset: Dataset,
                   pi: float | None = None, batch_size: int = 64,
                   topk=(3, 5)) -> EvalReport:
    """Score every tag for every POI and compute the full metric report."""
    pi = model.cfg.pi if pi is None else pi
    scores = predict_scores(model, pois, dataset, batch_size)
    L = len(dataset.tags)
    y_true = np.zeros((len(pois), L), dtype=bool)
    for i, p in enumerate(pois):
        y_true[i, sorted(p.gold_tags)] = True
    y_pred = scores > pi
    return evaluate(y_true, y_pred, scores, topk=topk)


@torch.no_grad()
def predict_scores(model: M3PT, pois: list[PoiRecord], dataset: Dataset,
                   batch_size: int = 64) -> np.ndarray:
    """Score matrix (n_pois, n_tags) under the model's variant."""
    model.eval()
    tag_embs = model.encode_tag_batch(
        [dataset.tokens.encode(t) for t in dataset.tags.tags]
    )
    out = []
    for start in range(0, len(pois), batch_size):
        chunk = pois[start:start + batch_size]
        texts, grids = _poi_inputs(chunk, dataset.tokens)
        content = model.content_embeddings(texts, grids)
        out.append(model.score_all_tags(content, tag_embs).cpu().numpy())
    model.train()
    return np.concatenate(out, axis=0)


def train(dataset: Dataset, cfg: ModelConfig, backbone_state: dict | None = None,
          log_path=None, epochs: int | None = None) -> tuple[M3PT, TrainState]:
    """Train the tagging model on the dataset's train split.

    ``backbone_state`` optionally initializes the image backbone from a
    pretrained image encoder; ``cfg.finetune_backbone=False`` freezes it.
    Aborts on non-finite loss, keeping the last good parameters.
    """
    validate_config(cfg)
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    epochs = cfg.epochs if epochs is None else epochs

    model = M3PT(cfg, len(dataset.tokens), dataset.G, dataset.C)
    if backbone_state is not None:
        model.image_backbone.load_state_dict(backbone_state)
    if not cfg.finetune_backbone:
        for param in model.image_backbone.parameters():
            param.requires_grad_(False)

    train_pois = dataset.split("train")
    val_pois = dataset.split("val")
    if not train_pois:
        raise ValueError("empty train split")
    L = len(dataset.tags)

    opt = torch.optim.AdamW(
        [p for p in model.parameters() if p.requires_grad],
        lr=cfg.lr_start, weight_decay=cfg.weight_decay,
    )
    n_batches = (len(train_pois) + cfg.batch_size - 1) // cfg.batch_size
    total_steps = epochs * n_batches
    state = TrainState()
    log_fh = open(log_path, "a", encoding="utf-8") if log_path else None

    tag_tokens = [dataset.tokens.encode(t) for t in dataset.tags.tags]
    last_good = None
    for epoch in range(epochs):
        order = rng.permutation(len(train_pois))
        for b in range(n_batches):
            batch = [train_pois[i] for i in order[b * cfg.batch_size:(b + 1) * cfg.batch_size]]
            texts, grids = _poi_inputs(batch, dataset.tokens)
            texts, grids = _corrupt_inputs(texts, grids, cfg, rng)
            content = model.content_embeddings(texts, grids)
            tag_embs = model.encode_tag_batch(tag_tokens)

            pair_poi, pair_tag, labels = [], [], []
            gold_pairs = []
            for i, poi in enumerate(batch):
                gold = sorted(poi.gold_tags)
                n_neg = min(cfg.negatives_per_positive * len(gold), L - len(gold))
                negs = sample_negatives(poi.gold_tags, L, rng, n_neg)
                for t in gold:
                    pair_poi.append(i); pair_tag.append(t); labels.append(1.0)
                    gold_pairs.append((i, t))
                for t in negs:
                    pair_poi.append(i); pair_tag.append(t); labels.append(0.0)

            l_ptm = loss_ptm(
                model, content, tag_embs,
                torch.tensor(pair_poi), torch.tensor(pair_tag), torch.tensor(labels),
            )
            pool = sorted({t for _, t in gold_pairs})
            l_ptc = loss_ptc(content, tag_embs, gold_pairs, pool, cfg.tau1)
            loss = total_loss(l_ptm, l_ptc, cfg.alpha)

            if not torch.isfinite(loss):
                if last_good is not None:
                    model.load_state_dict(last_good)
                raise RuntimeError(f"training diverged at step {state.step}")

            state.lr = linear_lr(cfg, state.step, total_steps)
            for group in opt.param_groups:
                group["lr"] = state.lr
            opt.zero_grad()
            loss.backward()
            opt.step()

            row = {"epoch": epoch, "step": state.step, "lr": state.lr,
                   "L_PTM": l_ptm.item(), "L_PTC": l_ptc.item(), "L": loss.item()}
            state.history.append(row)
            state.step += 1

        last_good = {k: v.detach().clone() for k, v in model.state_dict().items()}
        val_f1e = float("nan")
        if val_pois:
            val_f1e = evaluate_model(model, val_pois, dataset).example_f1
            if val_f1e > state.best_val_f1e:
                state.best_val_f1e = val_f1e
                state.best_state = last_good
        if log_fh:
            last = state.history[-1]
            log_fh.write(f"{epoch}, {last['step']}, {last['lr']:.8f}, "
                         f"{last['L_PTM']:.6f}, {last['L_PTC']:.6f}, "
                         f"{last['L']:.6f}, {val_f1e:.6f}\n")
        for row in state.history[-n_batches:]:
            row["val_F1e"] = val_f1e

    if state.best_state is not None:
        model.load_state_dict(state.best_state)
    if log_fh:
        log_fh.close()
    return model, state
