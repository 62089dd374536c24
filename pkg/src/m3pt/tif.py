"""Text-image fusion.

Each modality's set of D-dim embeddings is aggregated by a learned
clustering layer (per-cluster gates and scalar centroids, NeXtVLAD style),
sum-pooled into a DxK block, and linearly reduced to H dims.  The two
H-dim modality representations are then fused by a 2-token self-attention
layer and projected to the D-dim content embedding.
"""

from __future__ import annotations

import math

import torch
import torch.nn as nn

from .encoders import SelfAttention


class ClusterBank(nn.Module):
    """K cluster gates (w_k, b_k) plus K scalar centroids."""

    def __init__(self, dim: int, n_clusters: int):
        super().__init__()
        self.dim = dim
        self.n_clusters = n_clusters
        self.gate = nn.Linear(dim, n_clusters)
        self.centroids = nn.Parameter(torch.zeros(n_clusters))
        nn.init.normal_(self.centroids, std=0.1)

    def cluster_assign(self, emb: torch.Tensor) -> torch.Tensor:
        """Softmax proximities to each cluster, (B, K)."""
        if emb.shape[-1] != self.dim:
            raise ValueError(f"embedding dim {emb.shape[-1]} != {self.dim}")
        return self.gate(emb).softmax(dim=-1)

    def refine_descriptors(self, emb: torch.Tensor) -> torch.Tensor:
        """Gated centroid residuals, (B, D, K): alpha_k * (v_i - c_k)."""
        alpha = self.cluster_assign(emb)                        # (B, K)
        resid = emb.unsqueeze(-1) - self.centroids              # (B, D, K)
        return alpha.unsqueeze(1) * resid


class ModalityAggregator(nn.Module):
    """ClusterBank + sum pooling + linear reduction DxK -> H."""

    def __init__(self, dim: int, n_clusters: int, hidden: int):
        super().__init__()
        self.bank = ClusterBank(dim, n_clusters)
        self.reduce = nn.Linear(dim * n_clusters, hidden)
        # keep pooled magnitudes O(1) even at large D*K
        nn.init.uniform_(
            self.reduce.weight,
            -1.0 / math.sqrt(dim * n_clusters),
            1.0 / math.sqrt(dim * n_clusters),
        )

    def forward(self, embeddings: torch.Tensor, group_index: torch.Tensor,
                n_groups: int) -> tuple[torch.Tensor, torch.Tensor]:
        """Aggregate variable-size embedding sets.

        embeddings: (S, D) stacked inputs from all groups; group_index: (S,)
        maps each row to its group (POI).  Returns (n_groups, H) plus a
        boolean presence flag per group; groups with no inputs aggregate to
        the zero vector (the identity of sum pooling).
        """
        D, K = self.bank.dim, self.bank.n_clusters
        pooled = embeddings.new_zeros(n_groups, D, K)
        if embeddings.shape[0]:
            refined = self.bank.refine_descriptors(embeddings)  # (S, D, K)
            pooled.index_add_(0, group_index, refined)
        present = torch.zeros(n_groups, dtype=torch.bool, device=embeddings.device)
        present[group_index] = True
        reduced = self.reduce(pooled.reshape(n_groups, D * K))
        return torch.where(present[:, None], reduced, torch.zeros_like(reduced)), present

    def aggregate(self, embeddings: torch.Tensor) -> torch.Tensor:
        """Aggregate a single non-empty set, (M, D) -> (H,)."""
        if embeddings.ndim != 2 or embeddings.shape[0] == 0:
            raise ValueError("expected a non-empty (M, D) embedding set")
        idx = torch.zeros(embeddings.shape[0], dtype=torch.long, device=embeddings.device)
        out, _ = self.forward(embeddings, idx, 1)
        return out[0]


class FusionModule(nn.Module):
    """Per-modality aggregation plus the attention fusion layer."""

    def __init__(self, dim: int, n_clusters: int, hidden: int):
        super().__init__()
        self.dim = dim
        self.hidden = hidden
        self.text_agg = ModalityAggregator(dim, n_clusters, hidden)
        self.image_agg = ModalityAggregator(dim, n_clusters, hidden)
        self.attn = SelfAttention(hidden, n_heads=1)
        self.out_proj = nn.Linear(2 * hidden, dim)
        self.uni_proj = nn.Linear(hidden, dim)
        # start the content embedding small so early contrastive logits are
        # not saturated; standard Linear init wastes hundreds of steps
        # undoing the initial saturation
        with torch.no_grad():
            self.out_proj.weight.mul_(0.1)
            self.out_proj.bias.zero_()
            self.uni_proj.weight.mul_(0.1)
            self.uni_proj.bias.zero_()

    def fuse(self, text_repr: torch.Tensor, image_repr: torch.Tensor,
             image_present=None) -> torch.Tensor:
        """Content embedding c, (B, D), from the two (B, H) representations.

        Absent-image rows keep a zero image token that is also masked out of
        the attention keys.
        """
        if text_repr.shape[-1] != self.hidden or image_repr.shape[-1] != self.hidden:
            raise ValueError("modality representations must have dim H")
        tokens = torch.stack([text_repr, image_repr], dim=1)     # (B, 2, H)
        mask = None
        if image_present is not None:
            mask = torch.stack(
                [torch.zeros_like(image_present), ~image_present], dim=1
            )
        tokens = tokens + self.attn(tokens, key_padding_mask=mask)
        return self.out_proj(tokens.reshape(-1, 2 * self.hidden))

    def fuse_single(self, modality_repr: torch.Tensor) -> torch.Tensor:
        """Uni-modal variants: reduce one (B, H) representation straight to D."""
        return self.uni_proj(modality_repr)
