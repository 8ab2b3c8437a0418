"""Checkpoint files: JSON header plus raw little-endian float64 parameter blocks.

The header is human-inspectable (config snapshot, vocab, best validation
loss); numerics are exact. Parameter blocks follow the header in
lexicographic name order, so save -> load -> save is byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataError

MAGIC = b"CTXTAG1\n"
FORMAT_VERSION = 1


@dataclass
class CheckpointFile:
    config: dict
    vocab: list[str]
    params: dict[str, np.ndarray]
    best_val_loss: float  # inf when no validation split existed
    epoch: int

    def vocab_sha256(self) -> str:
        h = hashlib.sha256()
        for tok in self.vocab:
            h.update(tok.encode("utf-8"))
            h.update(b"\x00")
        return h.hexdigest()


def save_checkpoint(path, ckpt: CheckpointFile):
    names = sorted(ckpt.params)
    header = {
        "format_version": FORMAT_VERSION,
        "config": ckpt.config,
        "vocab": list(ckpt.vocab),
        "vocab_sha256": ckpt.vocab_sha256(),
        "best_val_loss": None if math.isinf(ckpt.best_val_loss) else float(ckpt.best_val_loss),
        "epoch": int(ckpt.epoch),
        "params": [{"name": n, "shape": list(ckpt.params[n].shape)} for n in names],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for n in names:
            fh.write(np.ascontiguousarray(ckpt.params[n], dtype="<f8").tobytes())


def load_checkpoint(path) -> CheckpointFile:
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise DataError(f"{path}: not a checkpoint file (bad magic)")
        (header_len,) = struct.unpack("<Q", fh.read(8))
        try:
            header = json.loads(fh.read(header_len).decode("utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise DataError(f"{path}: corrupt checkpoint header ({exc})")
        version = header.get("format_version")
        if version != FORMAT_VERSION:
            raise DataError(f"{path}: checkpoint format version {version} not supported (expected {FORMAT_VERSION})")
        params = {}
        for entry in header["params"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(count * 8)
            if len(raw) != count * 8:
                raise DataError(f"{path}: truncated parameter block for {entry['name']}")
            params[entry["name"]] = np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64)
    loss = header["best_val_loss"]
    return CheckpointFile(
        config=header["config"],
        vocab=list(header["vocab"]),
        params=params,
        best_val_loss=math.inf if loss is None else float(loss),
        epoch=int(header["epoch"]),
    )
