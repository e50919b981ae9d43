"""Pipeline configuration: one flat record covering every stage, loadable
from TOML or JSON files whose keys mirror the field names exactly."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Mapping

from causalaug.errors import ConfigurationError

FILL_ORDERS = ("ltr", "confidence")
DIS_MODES = ("similarity", "one_minus_similarity")
CYCLE_ORDERS = ("primal-dual", "dual-primal")
REWARD_BASELINES = ("none", "batch-mean")


@dataclass(frozen=True)
class PipelineConfig:
    """Every knob for a full run.  Paths are resolved relative to the config
    file's directory when loaded from disk, else to the working directory."""

    seed: int = 0

    # inputs and outputs
    corpus: str = "corpus.jsonl"
    lexicon: str = "lexicon.tsv"
    connectives: str = "connectives.tsv"
    raw_docs: str = ""  # unlabeled docs for connective mining; "" reuses corpus
    entity_candidates: str = ""  # TSV of extra entities; "" harvests from corpus
    out_dir: str = "out"

    # evaluation protocol
    k: int = 2
    dev_topics: tuple[str, ...] = ()
    test_topics: tuple[str, ...] = ()
    replicates: int = 3

    # causal embedding space
    dims: int = 16
    margin: float = 1.0
    space_epochs: int = 60
    space_lr: float = 0.05
    alpha: float = 0.30

    # encoder backend (shared by generators and identifier)
    dim: int = 32
    layers: int = 2
    max_len: int = 64
    hidden: int = 32
    share_encoder: bool = False

    # pretraining
    pretrain_epochs: int = 30
    lr_pretrain: float = 1e-5
    batch_size: int = 8

    # dual reinforcement training
    lambda_mix: float = 0.5
    gamma_mix: float = 0.5
    eta: float = 1e-7
    max_rounds: int = 10
    patience: int = 3
    cycle_order: str = "primal-dual"
    fill_order: str = "ltr"
    reward_baseline: str = "none"
    dual_max_pairs: int = 0  # 0 = use every selected pair
    dump_rewards: bool = False

    # generation and filtering
    m: int = 20
    mu: float = 0.2
    beta: float = 0.50
    dis_mode: str = "similarity"
    max_candidates_per_pair: int = 4

    # augmentation and final training
    ratio: str = "1:2"
    neg_rate: float = 0.5
    final_epochs: int = 30
    lr_further: float = 1e-5

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigurationError(f"alpha {self.alpha} outside (0, 1]")
        if not 0.0 < self.beta <= 1.0:
            raise ConfigurationError(f"beta {self.beta} outside (0, 1]")
        if not 0.0 <= self.mu <= 1.0:
            raise ConfigurationError(f"mu {self.mu} outside [0, 1]")
        for name in ("lambda_mix", "gamma_mix"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigurationError(f"{name} {value} outside [0, 1]")
        if self.margin <= 0:
            raise ConfigurationError("margin must be positive")
        for name in ("dims", "dim", "layers", "max_len", "hidden", "batch_size",
                     "patience", "replicates", "m"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1")
        for name in ("space_epochs", "pretrain_epochs", "final_epochs",
                     "max_rounds", "dual_max_pairs", "max_candidates_per_pair"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be >= 0")
        if self.k < 2:
            raise ConfigurationError("k must be >= 2")
        if self.fill_order not in FILL_ORDERS:
            raise ConfigurationError(f"unknown fill_order {self.fill_order!r}")
        if self.dis_mode not in DIS_MODES:
            raise ConfigurationError(f"unknown dis_mode {self.dis_mode!r}")
        if self.cycle_order not in CYCLE_ORDERS:
            raise ConfigurationError(f"unknown cycle_order {self.cycle_order!r}")
        if self.reward_baseline not in REWARD_BASELINES:
            raise ConfigurationError(f"unknown reward_baseline {self.reward_baseline!r}")
        _parse_ratio(self.ratio)

    def replaced(self, **changes: Any) -> "PipelineConfig":
        return dataclasses.replace(self, **changes)

    def to_json_dict(self) -> dict:
        raw = dataclasses.asdict(self)
        for key, value in raw.items():
            if isinstance(value, tuple):
                raw[key] = list(value)
        return raw


def _parse_ratio(ratio: str) -> tuple[int, int]:
    pieces = ratio.split(":")
    if len(pieces) != 2:
        raise ConfigurationError(f"ratio {ratio!r} is not of the form a:b")
    try:
        a, b = int(pieces[0]), int(pieces[1])
    except ValueError:
        raise ConfigurationError(f"ratio {ratio!r} is not of the form a:b") from None
    if a <= 0 or b <= 0:
        raise ConfigurationError(f"ratio {ratio!r} needs positive integers")
    return a, b


_TUPLE_FIELDS = {"dev_topics", "test_topics"}


def config_from_mapping(mapping: Mapping[str, Any]) -> PipelineConfig:
    known = {f.name: f for f in fields(PipelineConfig)}
    kwargs: dict[str, Any] = {}
    for key, value in mapping.items():
        if key not in known:
            raise ConfigurationError(f"unknown config field {key!r}")
        if key in _TUPLE_FIELDS:
            if not isinstance(value, (list, tuple)) or not all(
                isinstance(v, str) for v in value
            ):
                raise ConfigurationError(f"{key} must be a list of strings")
            value = tuple(value)
        kwargs[key] = value
    try:
        return PipelineConfig(**kwargs)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from None


def _resolve_paths(config: PipelineConfig, base: Path) -> PipelineConfig:
    changes = {}
    for name in ("corpus", "lexicon", "connectives", "raw_docs",
                 "entity_candidates", "out_dir"):
        value = getattr(config, name)
        if value and not Path(value).is_absolute():
            changes[name] = str((base / value).resolve())
    return config.replaced(**changes) if changes else config


def load_config(path: str | Path) -> PipelineConfig:
    """Read a TOML or JSON config file; relative paths inside it are taken
    relative to the file itself."""
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".json":
        try:
            mapping = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"invalid JSON in {path}: {exc}") from None
    else:
        try:
            import tomllib  # py >= 3.11
        except ModuleNotFoundError:
            import tomli as tomllib
        try:
            mapping = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigurationError(f"invalid TOML in {path}: {exc}") from None
    if not isinstance(mapping, dict):
        raise ConfigurationError(f"config root in {path} must be a table/object")
    return _resolve_paths(config_from_mapping(mapping), path.parent)


def config_hash(config: PipelineConfig) -> str:
    payload = json.dumps(config.to_json_dict(), sort_keys=True,
                         separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(payload).hexdigest()


def dump_config(config: PipelineConfig, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
