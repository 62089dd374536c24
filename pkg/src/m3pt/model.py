"""The full multi-modal tagging model: shared text encoder, image backbone,
fusion module, and matching head."""

from __future__ import annotations

import numpy as np
import torch
import torch.nn as nn

from .config import ModelConfig, validate_config
from .encoders import ImageBackbone, TextEncoder, pad_token_batch
from .matcher import MatchHead, TagPrediction, rank_predictions
from .tif import FusionModule
from .vocab import TagVocab, TokenVocab


class M3PT(nn.Module):
    def __init__(self, cfg: ModelConfig, n_tokens: int, grid_size: int, channels: int):
        super().__init__()
        self.cfg = validate_config(cfg)
        self.grid_size = grid_size
        self.channels = channels
        self.text_encoder = TextEncoder(
            n_tokens, cfg.D, cfg.n_layers, cfg.n_heads, cfg.max_seq_len,
            cfg.ffn_mult, cfg.dropout,
        )
        self.image_backbone = ImageBackbone(
            grid_size, channels, cfg.D, cfg.patch_size,
            cfg.n_layers, cfg.n_heads, cfg.ffn_mult, cfg.dropout,
        )
        self.fusion = FusionModule(cfg.D, cfg.K, cfg.H)
        self.match_head = MatchHead(cfg.D)

    # ----- encoding -------------------------------------------------------

    def encode_texts(self, token_lists: list[list[int]]) -> torch.Tensor:
        """Summary embedding for each token sequence, (N, D)."""
        ids = pad_token_batch(
            [seq[: self.cfg.max_seq_len] for seq in token_lists]
        )
        return self.text_encoder(ids)

    def encode_tag_batch(self, tag_token_lists: list[list[int]]) -> torch.Tensor:
        """Tags go through the same text encoder as POI texts."""
        return self.encode_texts(tag_token_lists)

    def content_embeddings(self, poi_texts: list[list[list[int]]],
                           poi_grids: list[list[np.ndarray]]) -> torch.Tensor:
        """Content embedding c for each POI, (B, D), honoring the variant."""
        B = len(poi_texts)
        variant = self.cfg.variant
        dtype = next(self.parameters()).dtype

        text_repr = image_repr = None
        image_present = None
        if variant in ("full", "text_only"):
            flat, group = [], []
            for i, texts in enumerate(poi_texts):
                if not texts:
                    raise ValueError(f"POI {i} has no texts")
                flat.extend(texts)
                group.extend([i] * len(texts))
            embs = self.encode_texts(flat)
            text_repr, _ = self.fusion.text_agg(
                embs, torch.tensor(group, dtype=torch.long), B
            )
        if variant in ("full", "image_only"):
            flat_g, group_g = [], []
            for i, grids in enumerate(poi_grids):
                flat_g.extend(grids)
                group_g.extend([i] * len(grids))
            if flat_g:
                stacked = torch.tensor(np.stack(flat_g), dtype=dtype)
                v_embs = self.image_backbone(stacked)
            else:
                v_embs = torch.zeros(0, self.cfg.D, dtype=dtype)
            image_repr, image_present = self.fusion.image_agg(
                v_embs, torch.tensor(group_g, dtype=torch.long), B
            )

        if variant == "text_only":
            return self.fusion.fuse_single(text_repr)
        if variant == "image_only":
            return self.fusion.fuse_single(image_repr)
        return self.fusion.fuse(text_repr, image_repr, image_present)

    # ----- matching -------------------------------------------------------

    def match_poi_tag(self, content: torch.Tensor, tag_emb: torch.Tensor) -> torch.Tensor:
        return self.match_head(content, tag_emb)

    @torch.no_grad()
    def score_all_tags(self, content: torch.Tensor, tag_embs: torch.Tensor) -> torch.Tensor:
        """Score matrix (B, |vocab|): every POI against every tag."""
        B, L = content.shape[0], tag_embs.shape[0]
        c_rep = content.repeat_interleave(L, dim=0)
        t_rep = tag_embs.repeat(B, 1)
        return self.match_head(c_rep, t_rep).reshape(B, L)

    @torch.no_grad()
    def predict_tags(self, poi_texts: list[list[int]], poi_grids: list[np.ndarray],
                     tag_vocab: TagVocab, tokens: TokenVocab,
                     pi: float | None = None) -> list[TagPrediction]:
        """Score every vocabulary tag for one POI and apply the threshold."""
        pi = self.cfg.pi if pi is None else pi
        content = self.content_embeddings([poi_texts], [poi_grids])
        tag_embs = self.encode_tag_batch([tokens.encode(t) for t in tag_vocab.tags])
        scores = self.score_all_tags(content, tag_embs)[0]
        return rank_predictions(scores, tag_vocab.tags, pi)
