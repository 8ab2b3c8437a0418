"""Run configuration: one JSON document covering model dimensions, training
hyperparameters, data paths, and synthetic-generator settings.

Every field has a default so a bare ``ctxtag train`` works on synthetic data;
unknown keys are rejected to catch typos early.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .errors import DataError
from .model import ModelConfig
from .training import TrainConfig


@dataclass
class DataConfig:
    corpus: str | None = None
    embeddings: str | None = None
    out_dir: str = "runs/out"
    split_ratio: float = 0.8
    val_fraction: float = 0.1


@dataclass
class SynthConfig:
    n_docs: int = 24
    sents_per_doc: int = 6
    n_classes: int = 4
    relevance_rate: float = 0.5
    context_strength: float = 1.0
    multi_label_rate: float = 0.15
    class_priors: list[float] | None = None


@dataclass
class RunConfig:
    seed: int = 0
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, obj: dict, source: str = "config") -> "RunConfig":
        if not isinstance(obj, dict):
            raise DataError(f"{source}: expected a JSON object")
        sections = {
            "model": ModelConfig,
            "train": TrainConfig,
            "data": DataConfig,
            "synth": SynthConfig,
        }
        known = set(sections) | {"seed"}
        unknown = set(obj) - known
        if unknown:
            raise DataError(f"{source}: unknown key(s) {sorted(unknown)}")
        kwargs = {"seed": int(obj.get("seed", 0))}
        for name, klass in sections.items():
            section = obj.get(name, {})
            if not isinstance(section, dict):
                raise DataError(f"{source}: section {name!r} must be an object")
            valid = {f.name for f in dataclasses.fields(klass)}
            bad = set(section) - valid
            if bad:
                raise DataError(f"{source}: unknown key(s) {sorted(bad)} in section {name!r}")
            try:
                kwargs[name] = klass(**section)
            except (TypeError, ValueError) as exc:
                raise DataError(f"{source}: invalid section {name!r}: {exc}")
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path, "r", encoding="utf-8") as fh:
            try:
                obj = json.load(fh)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: invalid JSON ({exc})")
        return cls.from_dict(obj, source=str(path))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
