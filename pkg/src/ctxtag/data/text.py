"""Tokenization, vocabulary, and fixed-width sentence encoding."""

from __future__ import annotations

import hashlib
import re
from collections import Counter
from dataclasses import dataclass

import numpy as np

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
PAD_ID = 0
UNK_ID = 1

MAX_WORDS = 30
MAX_VOCAB = 10000

# contraction suffixes split off as their own tokens
_CONTRACTION_RE = re.compile(r"(?<=\w)(n't|'s|'re|'ve|'ll|'d|'m)\b")
_TOKEN_RE = re.compile(r"n't|'(?:s|re|ve|ll|d|m)|[a-z0-9]+|[^\sa-z0-9]")


def tokenize(text: str) -> list[str]:
    """Lowercase and split; contractions and punctuation become their own tokens."""
    text = text.lower()
    text = _CONTRACTION_RE.sub(r" \1", text)
    return _TOKEN_RE.findall(text)


@dataclass(frozen=True)
class Vocab:
    """Dense token ids with PAD=0 and UNK=1; ordering is deterministic."""

    tokens: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.tokens)})

    @classmethod
    def build(cls, sentences, max_size: int = MAX_VOCAB) -> "Vocab":
        """Top ``max_size`` tokens by frequency, ties broken lexicographically."""
        counts = Counter()
        for sent in sentences:
            counts.update(sent)
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        kept = [tok for tok, _ in ranked[:max_size]]
        return cls(tokens=(PAD_TOKEN, UNK_TOKEN, *kept))

    @classmethod
    def from_tokens(cls, tokens) -> "Vocab":
        tokens = tuple(tokens)
        if len(tokens) < 2 or tokens[0] != PAD_TOKEN or tokens[1] != UNK_TOKEN:
            raise ValueError("vocab token list must start with the PAD and UNK specials")
        return cls(tokens=tokens)

    def __len__(self) -> int:
        return len(self.tokens)

    def encode(self, token: str) -> int:
        return self._index.get(token, UNK_ID)

    def sha256(self) -> str:
        h = hashlib.sha256()
        for tok in self.tokens:
            h.update(tok.encode("utf-8"))
            h.update(b"\x00")
        return h.hexdigest()


def encode_pad(vocab: Vocab, tokens, max_words: int = MAX_WORDS):
    """Encode to exactly ``max_words`` ids plus a real-token mask.

    Unknown tokens map to UNK; sentences longer than ``max_words`` keep their
    first ``max_words`` tokens.
    """
    ids = np.zeros(max_words, dtype=np.int64)
    mask = np.zeros(max_words, dtype=bool)
    for i, tok in enumerate(tokens[:max_words]):
        ids[i] = vocab.encode(tok)
        mask[i] = True
    return ids, mask
