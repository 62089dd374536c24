"""Multi-modal matching head and tag prediction."""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from .encoders import CrossAttention


@dataclass(frozen=True)
class TagPrediction:
    tag_id: int
    tag: str
    score: float
    accepted: bool


class MatchHead(nn.Module):
    """Cross-attend the tag embedding over the content memory, then a
    2-class softmax; the match-class probability is the score."""

    def __init__(self, dim: int):
        super().__init__()
        self.cross_attn = CrossAttention(dim)
        # small MLP: the tag/content interaction is encoded in the refined
        # token's geometry and a single linear readout underfits it
        self.classify = nn.Sequential(
            nn.Linear(dim, dim), nn.GELU(), nn.Linear(dim, 2)
        )

    def forward(self, content: torch.Tensor, tag_emb: torch.Tensor) -> torch.Tensor:
        """Match probabilities, one per row of (content, tag_emb)."""
        if content.shape[-1] != tag_emb.shape[-1]:
            raise ValueError("content and tag embedding dims differ")
        refined = self.cross_attn(tag_emb.unsqueeze(1), content.unsqueeze(1))[:, 0]
        return self.classify(refined).softmax(dim=-1)[:, 1]


def rank_predictions(scores: torch.Tensor, tags: list[str], pi: float) -> list[TagPrediction]:
    """All tags sorted by score descending, ties broken by ascending id."""
    if len(tags) == 0:
        raise ValueError("empty tag vocabulary")
    if not 0.0 <= pi <= 1.0:
        raise ValueError("pi outside [0,1]")
    vals = scores.detach().cpu().tolist()
    order = sorted(range(len(tags)), key=lambda i: (-vals[i], i))
    return [
        TagPrediction(tag_id=i, tag=tags[i], score=vals[i], accepted=vals[i] > pi)
        for i in order
    ]


def rank_topk(predictions: list[TagPrediction], k: int) -> list[TagPrediction]:
    if k < 1 or k > len(predictions):
        raise ValueError(f"k={k} outside [1, {len(predictions)}]")
    return predictions[:k]
