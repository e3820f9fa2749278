"""Experiment and training configuration.

Config files are flat ``key = value`` lines (``#`` starts a comment); keys
are the field names of :class:`TrainingConfig` and :class:`ExperimentConfig`.
Values are parsed with the field's type. Command-line flags override file
values.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path


@dataclass
class TrainingConfig:
    d_emb: int = 50
    d_h: int = 128
    init_seed: int = 0
    inner_lr: float = 1e-4  # support-set adaptation and meta-test step size
    outer_lr: float = 0.1  # meta (outer) step size
    k: int = 5  # trajectories per support question
    k_meta: int = 5  # trajectories for the meta-test question
    n_support: int = 5
    threshold: float = 0.85
    max_decode_len: int = 12
    batch_tasks: int = 5
    meta_epochs: int = 1
    outer: str = "reptile"  # or "fomaml"
    lr: float = 1e-3  # Adam, pretraining and policy gradient
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    pretrain_epochs: int = 30
    pretrain_batch: int = 16
    pg_epochs: int = 1
    pg_batch: int = 1
    baseline: bool = False
    baseline_decay: float = 0.9
    bfs_max_len: int = 3
    seed: int = 0
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.inner_lr < 0 or self.outer_lr < 0:
            raise ValueError("step sizes must be nonnegative")
        if min(self.k, self.k_meta) < 1 or self.n_support < 0:
            raise ValueError("k, k_meta must be >= 1 and n_support >= 0")
        if self.outer not in ("reptile", "fomaml"):
            raise ValueError(f"unknown outer update {self.outer!r}")


@dataclass
class ExperimentConfig:
    seed: int = 0
    entities_per_type: int = 100
    n_train: int = 3000
    n_valid: int = 300
    n_test: int = 700
    max_number: int = 4
    proportions: str = "462,93,99,43,41,122,42"
    n_pretrain: int = 300
    n_pg: int = 300
    n_meta: int = 200
    data_dir: str = "data"
    run_dir: str = "runs"
    training: TrainingConfig = field(default_factory=TrainingConfig)

    def __post_init__(self):
        sizes = (self.entities_per_type, self.n_train, self.n_test, self.max_number)
        if min(sizes) < 1:
            raise ValueError("generator sizes must be >= 1")

    @property
    def proportion_values(self):
        return tuple(float(x) for x in self.proportions.split(","))


def _scalar_fields(cls):
    return [f for f in fields(cls) if f.name != "training"]


def _parse_value(kind, text: str):
    kind = kind if isinstance(kind, str) else kind.__name__
    if kind == "bool":
        lowered = text.strip().lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    return {"int": int, "float": float, "str": str}[kind](text.strip())


def read_config_file(path) -> dict:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    parser.optionxform = str
    parser.read_string("[config]\n" + Path(path).read_text(encoding="utf-8"))
    return dict(parser["config"])


def build_config(values: dict) -> ExperimentConfig:
    """ExperimentConfig from raw ``key -> string`` values; unknown keys are errors."""
    exp_fields = {f.name: f for f in _scalar_fields(ExperimentConfig)}
    train_fields = {f.name: f for f in fields(TrainingConfig)}
    exp_kwargs, train_kwargs = {}, {}
    for key, raw in values.items():
        if key == "seed":
            exp_kwargs["seed"] = train_kwargs["seed"] = int(raw)
            continue
        if key in train_fields:
            target, f = train_kwargs, train_fields[key]
        elif key in exp_fields:
            target, f = exp_kwargs, exp_fields[key]
        else:
            raise KeyError(f"unknown config key {key!r}")
        target[key] = raw if not isinstance(raw, str) else _parse_value(f.type, raw)
    return ExperimentConfig(**exp_kwargs, training=TrainingConfig(**train_kwargs))


def add_config_arguments(parser: argparse.ArgumentParser) -> None:
    """One ``--flag`` per config field, defaulting to None (= keep file/default value)."""
    parser.add_argument("--config", help="key = value config file")
    seen = set()
    for f in _scalar_fields(ExperimentConfig) + list(fields(TrainingConfig)):
        if f.name in seen:
            continue
        seen.add(f.name)
        parser.add_argument("--" + f.name.replace("_", "-"), dest=f.name, default=None, metavar=f.name.upper())


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    values = read_config_file(args.config) if getattr(args, "config", None) else {}
    for f in _scalar_fields(ExperimentConfig) + list(fields(TrainingConfig)):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    return build_config(values)


def config_to_text(cfg: ExperimentConfig) -> str:
    lines = [f"{f.name} = {getattr(cfg, f.name)}" for f in _scalar_fields(ExperimentConfig)]
    lines += [f"{f.name} = {getattr(cfg.training, f.name)}" for f in fields(TrainingConfig) if f.name != "seed"]
    return "\n".join(lines) + "\n"


def replace_training(cfg: TrainingConfig, **changes) -> TrainingConfig:
    return dataclasses.replace(cfg, **changes)
