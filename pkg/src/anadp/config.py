"""Flat, typed experiment configuration.

A config file is a YAML mapping of scalar (or list) values, one key per
line. Unknown keys and mistyped values are rejected so a typo cannot
silently change a privacy-relevant hyperparameter.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Optional

import yaml

from anadp.data import VOCAB, Dataset, load_csv, make_blobs, make_separable, train_val_split
from anadp.errors import ConfigurationError
from anadp.exposure import AuditConfig
from anadp.importance import ImportanceConfig
from anadp.mechanism import ClipConfig
from anadp.models import ModelSpec
from anadp.trainer import TrainConfig

DATASET_KINDS = ("csv", "blobs", "separable", "canary_text")


@dataclass
class ExperimentConfig:
    # training
    mode: str = "anadp"
    lr: float = 0.5
    epochs: int = 5
    batch_size: int = 64
    seed: int = 0
    clip_norm: float = 10.0
    epsilon: Optional[float] = 8.0
    delta: float = 1e-5
    sigma0: Optional[float] = None
    eval_every: int = 25
    log_every: int = 10
    importance_from_noisy: bool = False
    conservative: bool = False
    # importance
    beta1: float = 0.85
    beta2: float = 0.85
    alpha: float = 0.3
    q_hi: float = 0.75
    q_lo: float = 0.25
    floor: float = 0.1
    iqr_epsilon: float = 1e-12
    # model
    model: str = "logistic"
    hidden_dim: int = 0
    embed_dim: int = 8
    context_len: int = 8
    # dataset
    dataset: str = "blobs"
    dataset_path: Optional[str] = None
    dataset_seed: int = 0
    n_samples: int = 2000
    dim: int = 20
    separation: float = 2.0
    num_classes: Optional[int] = None
    val_fraction: float = 0.2
    # canary corpus (dataset: canary_text)
    corpus_tokens: int = 50_000
    canary_digits: int = 4
    canary_repetitions: int = 50
    canary_prefix: str = "my pin is "
    name_canaries: int = 0
    name_candidates: int = 1000
    # accountant-only runs
    sampling_rate: Optional[float] = None
    steps: Optional[int] = None
    # comparison
    modes: list = field(default_factory=lambda: ["dp_uniform", "anadp"])
    seeds: list = field(default_factory=lambda: list(range(20)))
    workers: int = 1

    def __post_init__(self):
        if self.dataset not in DATASET_KINDS:
            raise ConfigurationError(f"dataset must be one of {DATASET_KINDS}, got {self.dataset!r}")
        if self.dataset == "csv":
            if not self.dataset_path:
                raise ConfigurationError("csv datasets need dataset_path")
            if not Path(self.dataset_path).is_file():
                raise ConfigurationError(f"dataset_path {self.dataset_path!r} does not exist")
        if not self.seeds:
            raise ConfigurationError("seeds list must be nonempty")
        if not all(isinstance(s, int) and not isinstance(s, bool) for s in self.seeds):
            raise ConfigurationError("seeds must be integers")
        if not all(isinstance(m, str) for m in self.modes) or not self.modes:
            raise ConfigurationError("modes must be a nonempty list of strings")
        if self.workers < 1:
            raise ConfigurationError("workers must be >= 1")

    @classmethod
    def from_mapping(cls, data: dict[str, Any]) -> "ExperimentConfig":
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(data) - set(known))
        if unknown:
            raise ConfigurationError(f"unknown config keys: {', '.join(unknown)}")
        kwargs = {k: _coerce(k, v, known[k]) for k, v in data.items()}
        return cls(**kwargs)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        try:
            data = yaml.safe_load(path.read_text())
        except yaml.YAMLError as exc:
            raise ConfigurationError(f"{path}: {exc}") from None
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigurationError(f"{path}: expected a flat key/value mapping")
        return cls.from_mapping(data)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    # -- builders ---------------------------------------------------------

    def model_spec(self, num_classes: int, feature_dim: int) -> ModelSpec:
        if self.model == "char_lm":
            v = len(VOCAB)
            return ModelSpec("char_lm", self.embed_dim, v, hidden_dim=self.hidden_dim or 64,
                             vocab_size=v, context_len=self.context_len)
        if self.model == "mlp1":
            return ModelSpec("mlp1", feature_dim, num_classes, hidden_dim=self.hidden_dim or 16)
        return ModelSpec(self.model, feature_dim, num_classes, hidden_dim=self.hidden_dim)

    def train_config(self, spec: ModelSpec, *, mode: Optional[str] = None, seed: Optional[int] = None) -> TrainConfig:
        return TrainConfig(
            model=spec,
            mode=mode or self.mode,
            lr=self.lr,
            epochs=self.epochs,
            batch_size=self.batch_size,
            seed=self.seed if seed is None else seed,
            clip=ClipConfig(self.clip_norm),
            importance=ImportanceConfig(self.beta1, self.beta2, self.alpha, self.q_hi, self.q_lo,
                                        self.floor, self.iqr_epsilon),
            epsilon=self.epsilon,
            delta=self.delta,
            sigma0=self.sigma0,
            eval_every=self.eval_every,
            log_every=self.log_every,
            importance_from_noisy=self.importance_from_noisy,
            conservative=self.conservative,
        )

    def audit_config(self) -> AuditConfig:
        return AuditConfig(
            corpus_tokens=self.corpus_tokens,
            digits=self.canary_digits,
            repetitions=self.canary_repetitions,
            prefix=self.canary_prefix,
            name_canaries=self.name_canaries,
            name_candidates=self.name_candidates,
            name_repetitions=self.canary_repetitions,
            corpus_seed=self.dataset_seed,
        )


def _coerce(key: str, value: Any, f: dataclasses.Field) -> Any:
    kind = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", str(f.type))
    optional = kind.startswith("Optional[")
    base = kind[len("Optional["):-1] if optional else kind
    if value is None:
        if optional:
            return None
        raise ConfigurationError(f"{key}: value required")
    if base == "bool":
        if not isinstance(value, bool):
            raise ConfigurationError(f"{key}: expected true/false, got {value!r}")
        return value
    if base == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigurationError(f"{key}: expected an integer, got {value!r}")
        return value
    if base == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            # PyYAML reads 1e-5 (no dot) as a string
            if isinstance(value, str):
                try:
                    return float(value)
                except ValueError:
                    pass
            raise ConfigurationError(f"{key}: expected a number, got {value!r}")
        return float(value)
    if base == "str":
        if not isinstance(value, str):
            raise ConfigurationError(f"{key}: expected a string, got {value!r}")
        return value
    if base == "list":
        if not isinstance(value, list):
            raise ConfigurationError(f"{key}: expected a list, got {value!r}")
        return value
    raise ConfigurationError(f"{key}: unsupported field type {kind}")


def load_dataset(cfg: ExperimentConfig) -> Dataset:
    """Tabular dataset from the config's dataset block (not canary_text)."""
    if cfg.dataset == "blobs":
        return make_blobs(cfg.n_samples, cfg.dim, cfg.separation, cfg.dataset_seed)
    if cfg.dataset == "separable":
        return make_separable(cfg.n_samples, cfg.dim, cfg.separation, cfg.dataset_seed)
    if cfg.dataset == "csv":
        return load_csv(cfg.dataset_path, cfg.num_classes)
    raise ConfigurationError("canary_text corpora are built by the exposure audit, not loaded as tables")


def load_split(cfg: ExperimentConfig) -> tuple[Dataset, Dataset]:
    return train_val_split(load_dataset(cfg), cfg.val_fraction, cfg.dataset_seed)
