"""Dynamic stochastic block model with planted, drifting communities."""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .graph import DynamicGraph, GraphSnapshot

SHIFT_FRACTION = 0.5
MEAN_SCALE = 3.0


class UndetectableRegimeWarning(UserWarning):
    """p_in <= p_out: planted communities are not denser than the background."""


@dataclass(frozen=True)
class DynSbmConfig:
    n: int = 60
    c: int = 3
    t: int = 4
    p_in: float = 0.4
    p_out: float = 0.05
    migrate_frac: float = 0.0
    shift_step: int | None = None  # 1-based snapshot index that receives the large reshuffle
    feature_dim: int = 16
    feature_noise: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.t < 1:
            raise ValueError("n and t must be positive")
        if not 1 <= self.c <= self.n:
            raise ValueError(f"c={self.c} must lie in [1, n={self.n}]")
        for name in ("p_in", "p_out", "migrate_frac"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name}={value} must lie in [0, 1]")
        if self.feature_dim < 1:
            raise ValueError("feature_dim must be positive")
        if self.feature_noise < 0:
            raise ValueError("feature_noise must be non-negative")
        if self.shift_step is not None and not 2 <= self.shift_step <= self.t:
            raise ValueError(f"shift_step={self.shift_step} must lie in [2, t={self.t}]")
        if not self.detectable:
            warnings.warn(self.undetectable_message(), UndetectableRegimeWarning, stacklevel=3)

    @property
    def detectable(self) -> bool:
        return self.p_in > self.p_out

    def undetectable_message(self) -> str:
        return f"p_in={self.p_in} <= p_out={self.p_out}: communities are not detectable"

    def to_dict(self) -> dict:
        return asdict(self)


def _reassign(labels: np.ndarray, count: int, c: int, rng: np.random.Generator) -> np.ndarray:
    out = labels.copy()
    if count == 0 or c == 1:
        return out
    movers = rng.choice(labels.size, size=count, replace=False)
    # offset in [1, c) guarantees the new community differs from the old one
    out[movers] = (labels[movers] + rng.integers(1, c, size=count)) % c
    return out


def generate(cfg: DynSbmConfig) -> DynamicGraph:
    """Sample a dynamic SBM; labels are embedded as ground truth."""
    rng = np.random.default_rng(cfg.seed)
    n, c = cfg.n, cfg.c
    labels = np.empty((cfg.t, n), dtype=np.int64)
    labels[0] = rng.permutation(np.arange(n) % c)
    migrate = math.ceil(cfg.migrate_frac * n)
    for step in range(1, cfg.t):
        count = math.ceil(SHIFT_FRACTION * n) if cfg.shift_step == step + 1 else migrate
        labels[step] = _reassign(labels[step - 1], count, c, rng)

    means = MEAN_SCALE * rng.standard_normal((c, cfg.feature_dim))
    iu = np.triu_indices(n, k=1)
    snaps = []
    for step in range(cfg.t):
        lab = labels[step]
        same = lab[:, None] == lab[None, :]
        prob = np.where(same, cfg.p_in, cfg.p_out)[iu]
        edges = (rng.random(prob.size) < prob).astype(np.float64)
        adj = np.zeros((n, n))
        adj[iu] = edges
        adj = adj + adj.T
        features = means[lab] + cfg.feature_noise * rng.standard_normal((n, cfg.feature_dim))
        snaps.append(GraphSnapshot(adj, features))
    return DynamicGraph(tuple(snaps), labels)
