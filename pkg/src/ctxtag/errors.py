"""Exception types shared across the package."""


class DataError(Exception):
    """Malformed or inconsistent input data (corpus, embeddings, checkpoints)."""


class NumericError(Exception):
    """Non-finite value encountered where training cannot continue."""
