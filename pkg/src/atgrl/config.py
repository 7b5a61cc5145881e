"""Experiment configuration: generator, training and evaluation settings in one file."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace

from . import jsonio
from .synth import DynSbmConfig
from .trainer import TrainConfig

HEADS = ("modularity", "kmeans")


class ConfigError(ValueError):
    """Experiment configuration is malformed or names unknown keys."""


def _section(cls, payload, where: str):
    if payload is None:
        return cls()
    if not isinstance(payload, dict):
        raise ConfigError(f"'{where}' must be an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(payload) - known)
    if unknown:
        raise ConfigError(f"unknown keys in '{where}': {unknown}")
    try:
        return cls(**payload)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid '{where}' section: {exc}") from exc


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines a run.

    ``head`` selects how hard partitions are read off the encoder: the learned
    modularity head, or k-means on the embeddings with ``train.communities``
    clusters.
    """

    synth: DynSbmConfig = field(default_factory=DynSbmConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    head: str = "modularity"
    input_path: str | None = None
    output_dir: str | None = None

    def __post_init__(self):
        if self.head not in HEADS:
            raise ConfigError(f"head must be one of {HEADS}, got {self.head!r}")

    def to_dict(self) -> dict:
        return {
            "synth": self.synth.to_dict(),
            "train": self.train.to_dict(),
            "head": self.head,
            "input_path": self.input_path,
            "output_dir": self.output_dir,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ExperimentConfig":
        if not isinstance(payload, dict):
            raise ConfigError("experiment config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(payload) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        return cls(
            synth=_section(DynSbmConfig, payload.get("synth"), "synth"),
            train=_section(TrainConfig, payload.get("train"), "train"),
            head=payload.get("head", "modularity"),
            input_path=payload.get("input_path"),
            output_dir=payload.get("output_dir"),
        )

    def with_overrides(self, synth: dict | None = None, train: dict | None = None, **top) -> "ExperimentConfig":
        """Copy with selected fields replaced; unknown names raise :class:`ConfigError`."""
        try:
            new_synth = replace(self.synth, **(synth or {}))
            new_train = replace(self.train, **(train or {}))
            return replace(self, synth=new_synth, train=new_train, **top)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc


def load_experiment_config(path) -> ExperimentConfig:
    try:
        payload = jsonio.read_json(path)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return ExperimentConfig.from_dict(payload)


def save_experiment_config(cfg: ExperimentConfig, path) -> None:
    jsonio.write_json(path, cfg.to_dict())


def flat_dict(cfg: ExperimentConfig) -> dict:
    """Single-level view used for comparing configurations."""
    out = {f"synth.{k}": v for k, v in asdict(cfg.synth).items()}
    out.update({f"train.{k}": v for k, v in cfg.train.to_dict().items()})
    out["head"] = cfg.head
    return out
