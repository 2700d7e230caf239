"""Pipeline configuration: one flat key-value file drives every stage.

All stage hyperparameters live here; every artifact manifest embeds the
hash of the resolved configuration, and all randomness fans out from the
single root seed keyed by stage name.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import yaml


@dataclass
class PipelineConfig:
    corpus_root: str = "corpus"
    output_dir: str = "artifacts"
    seed: int = 42
    ablate: Optional[str] = None  # identifiers | context | visible
    lemmatize: bool = True

    # dedup
    dedup_dim: int = 4096
    dedup_k: int = 5
    dedup_threshold: float = 0.95
    dedup_backend: str = "auto"

    # split
    train_ratio: float = 0.7
    valid_ratio: float = 0.1
    test_ratio: float = 0.2

    # visible types
    visible_vocab_size: int = 1024

    # embeddings
    embedding_dim: int = 100
    w2v_window: int = 5
    w2v_negative: int = 5
    w2v_min_count: int = 5
    w2v_epochs: int = 5
    w2v_lr: float = 0.025

    # sequences
    id_length: int = 31
    ctx_length: int = 49
    window_tokens: int = 7
    max_statements: int = 7
    window_per_statement: bool = True

    # encoder
    hidden_size: int = 256
    output_dim: int = 4096
    dropout: float = 0.25
    lr: float = 0.002
    epochs: int = 15
    batch_size: int = 2536
    margin: float = 2.0
    clip_norm: float = 10.0

    # index / prediction
    knn_k: int = 10
    index_backend: str = "exact"
    index_trees: int = 16
    index_leaf_size: int = 32
    top_n: int = 10

    def validate(self) -> None:
        total = self.train_ratio + self.valid_ratio + self.test_ratio
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"split ratios must sum to 1.0, got {total}")
        if self.ablate not in (None, "identifiers", "context", "visible"):
            raise ValueError(f"unknown ablation {self.ablate!r}")

    def to_dict(self) -> dict:
        return asdict(self)


# Table-of-hyperparameters values for the full-scale run.
PAPER_PRESET: dict = {}

# Small enough to train on a laptop CPU in minutes. The learning rate is
# raised to suit the small batch: 5 optimizer steps per epoch need decisive
# early progress off the triplet-loss margin plateau.
DESK_PRESET = {
    "visible_vocab_size": 128,
    "w2v_min_count": 1,
    "hidden_size": 32,
    "output_dim": 128,
    "batch_size": 64,
    "lr": 0.008,
}

PRESETS = {"paper": PAPER_PRESET, "desk": DESK_PRESET}


def make_config(preset: Optional[str] = None, **overrides) -> PipelineConfig:
    values: dict = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ValueError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        values.update(PRESETS[preset])
    values.update({k: v for k, v in overrides.items() if v is not None})
    cfg = PipelineConfig(**values)
    cfg.validate()
    return cfg


def load_config(path: str | Path, **overrides) -> PipelineConfig:
    raw = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    if not isinstance(raw, dict):
        raise ValueError(f"config file {path} must hold a key-value mapping")
    known = {f.name for f in fields(PipelineConfig)}
    unknown = set(raw) - known - {"preset"}
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    preset = raw.pop("preset", None)
    raw.update({k: v for k, v in overrides.items() if v is not None})
    return make_config(preset, **raw)


def save_config(cfg: PipelineConfig, path: str | Path) -> None:
    Path(path).write_text(
        yaml.safe_dump(cfg.to_dict(), sort_keys=True), encoding="utf-8"
    )


def config_hash(cfg: PipelineConfig) -> str:
    """Hash of the semantic configuration.

    Filesystem locations are excluded: two runs of the same configuration
    over the same corpus produce identical artifacts wherever they live
    (corpus contents and upstream artifacts are hashed separately in the
    stage manifests).
    """
    values = cfg.to_dict()
    values.pop("corpus_root")
    values.pop("output_dir")
    canonical = json.dumps(values, sort_keys=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def derive_seed(root_seed: int, *names) -> int:
    """Deterministic per-stage seed from the root seed and stage name(s)."""
    key = ":".join([str(root_seed)] + [str(n) for n in names])
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")
