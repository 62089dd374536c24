"""Small trained-from-scratch text and image encoders.

Both encoders emit D-dimensional embeddings via a first-position summary
token (CLS-style).  The image encoder patchifies a GxGxC feature grid the
way a ViT patchifies pixels.
"""

from __future__ import annotations

import math

import torch
import torch.nn as nn

from .vocab import CLS, PAD


def pad_token_batch(sequences: list[list[int]], device=None) -> torch.Tensor:
    """Stack variable-length token id lists into a PAD-padded LongTensor."""
    if not sequences:
        raise ValueError("empty batch of sequences")
    if any(len(s) == 0 for s in sequences):
        raise ValueError("empty token sequence")
    width = max(len(s) for s in sequences)
    out = torch.full((len(sequences), width), PAD, dtype=torch.long, device=device)
    for i, seq in enumerate(sequences):
        out[i, : len(seq)] = torch.tensor(seq, dtype=torch.long)
    return out


class SelfAttention(nn.Module):
    def __init__(self, dim: int, n_heads: int = 1):
        super().__init__()
        if dim % n_heads:
            raise ValueError("n_heads must divide dim")
        self.n_heads = n_heads
        self.head_dim = dim // n_heads
        self.qkv = nn.Linear(dim, 3 * dim)
        self.out = nn.Linear(dim, dim)

    def forward(self, x, key_padding_mask=None):
        # x: (B, T, D); key_padding_mask: (B, T) True where padded
        B, T, D = x.shape
        q, k, v = self.qkv(x).chunk(3, dim=-1)
        q = q.view(B, T, self.n_heads, self.head_dim).transpose(1, 2)
        k = k.view(B, T, self.n_heads, self.head_dim).transpose(1, 2)
        v = v.view(B, T, self.n_heads, self.head_dim).transpose(1, 2)
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.head_dim)
        if key_padding_mask is not None:
            scores = scores.masked_fill(key_padding_mask[:, None, None, :], float("-inf"))
        attn = scores.softmax(dim=-1)
        y = (attn @ v).transpose(1, 2).reshape(B, T, D)
        return self.out(y)


class CrossAttention(nn.Module):
    """Refine query tokens against a key/value memory (single head)."""

    def __init__(self, dim: int):
        super().__init__()
        self.q_proj = nn.Linear(dim, dim)
        self.k_proj = nn.Linear(dim, dim)
        self.v_proj = nn.Linear(dim, dim)
        self.out = nn.Linear(dim, dim)
        # no normalization before the FFN: the magnitude of query+attended
        # value is the main query/memory interaction signal downstream heads
        # read, and a LayerNorm would erase it
        self.ffn = nn.Sequential(
            nn.Linear(dim, 2 * dim), nn.GELU(), nn.Linear(2 * dim, dim)
        )

    def forward(self, query, memory, memory_mask=None):
        # query: (B, Tq, D); memory: (B, Tm, D); memory_mask True where padded
        scale = math.sqrt(query.shape[-1])
        scores = self.q_proj(query) @ self.k_proj(memory).transpose(-2, -1) / scale
        if memory_mask is not None:
            scores = scores.masked_fill(memory_mask[:, None, :], float("-inf"))
        attn = scores.softmax(dim=-1)
        refined = query + self.out(attn @ self.v_proj(memory))
        return refined + self.ffn(refined)


class EncoderLayer(nn.Module):
    """Pre-LN transformer block."""

    def __init__(self, dim: int, n_heads: int, ffn_mult: int = 2, dropout: float = 0.0):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = SelfAttention(dim, n_heads)
        self.norm2 = nn.LayerNorm(dim)
        self.ffn = nn.Sequential(
            nn.Linear(dim, ffn_mult * dim), nn.GELU(), nn.Linear(ffn_mult * dim, dim)
        )
        self.drop = nn.Dropout(dropout)

    def forward(self, x, key_padding_mask=None):
        x = x + self.drop(self.attn(self.norm1(x), key_padding_mask))
        return x + self.drop(self.ffn(self.norm2(x)))


class TextEncoder(nn.Module):
    """Token embeddings + learned positions + self-attention stack.

    Shared by POI texts and tag strings: a tag is encoded exactly like any
    other piece of text.
    """

    def __init__(self, n_tokens: int, dim: int, n_layers: int = 2, n_heads: int = 1,
                 max_seq_len: int = 64, ffn_mult: int = 2, dropout: float = 0.0):
        super().__init__()
        self.n_tokens = n_tokens
        self.dim = dim
        self.max_seq_len = max_seq_len
        self.tok_emb = nn.Embedding(n_tokens, dim)
        # +1 position for the prepended [CLS]
        self.pos_emb = nn.Embedding(max_seq_len + 1, dim)
        self.layers = nn.ModuleList(
            EncoderLayer(dim, n_heads, ffn_mult, dropout) for _ in range(n_layers)
        )
        self.norm = nn.LayerNorm(dim)

    def _check(self, token_ids: torch.Tensor) -> None:
        if token_ids.ndim != 2 or token_ids.shape[1] == 0:
            raise ValueError("expected a non-empty (batch, seq) token tensor")
        if token_ids.shape[1] > self.max_seq_len:
            raise ValueError(f"sequence longer than max_seq_len={self.max_seq_len}")
        if token_ids.min() < 0 or token_ids.max() >= self.n_tokens:
            raise ValueError("token id outside vocabulary")

    def encode_tokens(self, token_ids: torch.Tensor, padding_mask=None) -> torch.Tensor:
        """Per-token hidden states, (B, T+1, D); position 0 is the summary."""
        self._check(token_ids)
        B, T = token_ids.shape
        cls = torch.full((B, 1), CLS, dtype=token_ids.dtype, device=token_ids.device)
        ids = torch.cat([cls, token_ids], dim=1)
        if padding_mask is None:
            padding_mask = ids == PAD
        else:
            padding_mask = torch.cat(
                [torch.zeros(B, 1, dtype=torch.bool, device=token_ids.device), padding_mask],
                dim=1,
            )
        pos = torch.arange(T + 1, device=token_ids.device)
        x = self.tok_emb(ids) + self.pos_emb(pos)[None]
        for layer in self.layers:
            x = layer(x, padding_mask)
        return self.norm(x)

    def forward(self, token_ids: torch.Tensor, padding_mask=None) -> torch.Tensor:
        """Summary embedding, (B, D)."""
        return self.encode_tokens(token_ids, padding_mask)[:, 0]


class ImageBackbone(nn.Module):
    """Patchifies a GxGxC grid into tokens and runs the same block stack."""

    def __init__(self, grid_size: int, channels: int, dim: int, patch_size: int = 4,
                 n_layers: int = 2, n_heads: int = 1, ffn_mult: int = 2,
                 dropout: float = 0.0):
        super().__init__()
        if grid_size % patch_size:
            raise ValueError("patch_size must divide grid_size")
        self.grid_size = grid_size
        self.channels = channels
        self.patch_size = patch_size
        self.n_patches = (grid_size // patch_size) ** 2
        self.patch_proj = nn.Linear(patch_size * patch_size * channels, dim)
        self.summary = nn.Parameter(torch.zeros(dim))
        self.pos_emb = nn.Embedding(self.n_patches + 1, dim)
        self.layers = nn.ModuleList(
            EncoderLayer(dim, n_heads, ffn_mult, dropout) for _ in range(n_layers)
        )
        self.norm = nn.LayerNorm(dim)
        nn.init.normal_(self.summary, std=0.02)

    def patchify(self, grids: torch.Tensor) -> torch.Tensor:
        # grids: (B, G, G, C) -> (B, n_patches, P*P*C)
        B, G, G2, C = grids.shape
        if G != self.grid_size or G2 != self.grid_size or C != self.channels:
            raise ValueError(
                f"grid shape {tuple(grids.shape[1:])} does not match "
                f"({self.grid_size}, {self.grid_size}, {self.channels})"
            )
        P = self.patch_size
        x = grids.view(B, G // P, P, G // P, P, C)
        return x.permute(0, 1, 3, 2, 4, 5).reshape(B, self.n_patches, P * P * C)

    def forward(self, grids: torch.Tensor) -> torch.Tensor:
        """Summary embedding of each grid, (B, D)."""
        tokens = self.patch_proj(self.patchify(grids))
        B = tokens.shape[0]
        x = torch.cat([self.summary.expand(B, 1, -1), tokens], dim=1)
        pos = torch.arange(self.n_patches + 1, device=grids.device)
        x = x + self.pos_emb(pos)[None]
        for layer in self.layers:
            x = layer(x)
        return self.norm(x)[:, 0]
