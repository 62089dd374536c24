"""Token and tag vocabularies.

Tokenization is whitespace splitting over lowercased text against a closed
token vocabulary; anything unseen maps to [UNK].  The token vocabulary file
is one token per line, line number = token id.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

PAD, UNK, CLS, MASK = 0, 1, 2, 3
RESERVED = ["[PAD]", "[UNK]", "[CLS]", "[MASK]"]


class TokenVocab:
    def __init__(self, tokens: list[str]):
        if tokens[: len(RESERVED)] != RESERVED:
            raise ValueError("token vocabulary must start with the reserved tokens")
        if len(set(tokens)) != len(tokens):
            raise ValueError("duplicate tokens in vocabulary")
        self.tokens = list(tokens)
        self.index = {tok: i for i, tok in enumerate(tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    @classmethod
    def build(cls, words) -> "TokenVocab":
        """Closed vocabulary: reserved ids followed by sorted unique words."""
        extra = sorted(set(words) - set(RESERVED))
        return cls(RESERVED + extra)

    def encode(self, text: str) -> list[int]:
        return [self.index.get(w, UNK) for w in text.lower().split()]

    def save(self, path) -> None:
        Path(path).write_text("\n".join(self.tokens) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "TokenVocab":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls([ln for ln in lines if ln])


@dataclass
class TagVocab:
    """Ordered tag strings with contiguous integer ids."""

    tags: list[str]
    index: dict[str, int]
    U_tokens: int

    def __len__(self) -> int:
        return len(self.tags)

    @classmethod
    def build(cls, tags: list[str], tokens: TokenVocab) -> "TagVocab":
        if len(set(tags)) != len(tags):
            raise ValueError("duplicate tag strings")
        for tag in tags:
            ids = tokens.encode(tag)
            if not ids or all(i == UNK for i in ids):
                raise ValueError(f"tag {tag!r} has no in-vocabulary tokens")
        return cls(list(tags), {t: i for i, t in enumerate(tags)}, len(tokens))

    def save(self, path) -> None:
        Path(path).write_text("\n".join(self.tags) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path, tokens: TokenVocab) -> "TagVocab":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls.build([ln for ln in lines if ln], tokens)
