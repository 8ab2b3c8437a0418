"""Loader for plain-text word-vector files ("word f1 f2 ... fd" per line)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DataError
from .text import PAD_ID, Vocab


@dataclass
class EmbeddingTable:
    dim: int
    vectors: dict[str, np.ndarray]


def read_embedding_file(path) -> EmbeddingTable:
    """Parse a text embedding file; inconsistent rows raise naming the line."""
    vectors: dict[str, np.ndarray] = {}
    dim = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            word, values = parts[0], parts[1:]
            if dim is None:
                if not values:
                    raise DataError(f"{path}: line {lineno}: no vector values")
                dim = len(values)
            if len(values) != dim:
                raise DataError(f"{path}: line {lineno}: expected {dim} values, got {len(values)}")
            try:
                vec = np.array([float(v) for v in values], dtype=np.float64)
            except ValueError:
                raise DataError(f"{path}: line {lineno}: non-numeric vector value")
            vectors[word] = vec
    if dim is None:
        raise DataError(f"{path}: empty embedding file")
    return EmbeddingTable(dim=dim, vectors=vectors)


def load_embeddings(path, vocab: Vocab) -> np.ndarray:
    """Map an embedding file onto the vocabulary as a (V x d) matrix.

    Words absent from the file get zero rows; the PAD row is zero.
    """
    table = read_embedding_file(path)
    matrix = np.zeros((len(vocab), table.dim), dtype=np.float64)
    for i, token in enumerate(vocab.tokens):
        vec = table.vectors.get(token)
        if vec is not None:
            matrix[i] = vec
    matrix[PAD_ID] = 0.0
    return matrix


def random_pretrained(vocab_size: int, dim: int, seed: int) -> np.ndarray:
    """Seeded stand-in for a pretrained table when no embedding file is given.

    Frozen like a real pretrained table; distinct rows make tokens separable.
    """
    rng = np.random.default_rng(seed)
    matrix = rng.uniform(-0.5, 0.5, size=(vocab_size, dim))
    matrix[PAD_ID] = 0.0
    return matrix
