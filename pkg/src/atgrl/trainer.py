"""Three-term training objective with alternating adversarial updates."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import jsonio
from .adversarial import (
    DiscriminatorParams,
    PriorSpec,
    discriminator_loss,
    gaussian_prior,
    generator_loss,
    init_discriminator,
    mixture_prior,
    sample_prior,
)
from .autodiff import Tensor
from .decoder import decode_logits, reconstruction_loss_from_logits, reconstruction_targets
from .encoder import EncoderConfig, EncoderConfigError, EncoderParams, encode, init_encoder, snapshot_rows
from .graph import DynamicGraph
from .metrics import MetricUndefinedError, evaluate, kmeans
from .modularity import harden, measurable_modularity_loss, modularity_context, soft_assign

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
ASSIGN_MODES = ("pooled", "per-timestep")
PRIOR_KINDS = ("mixture", "gaussian")


class NumericalError(RuntimeError):
    """A loss term became non-finite during training."""

    def __init__(self, epoch: int, term: str, value: float):
        super().__init__(f"non-finite {term}={value!r} at epoch {epoch}")
        self.epoch = epoch
        self.term = term


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 500
    lr: float = 0.001
    weight_decay: float = 0.01
    lam: float = 0.5
    communities: int = 15
    w_re: float = 1.0
    w_g: float = 1.0
    w_mm: float = 1.0
    d_steps: int = 1
    g_steps: int = 1
    seed: int = 0
    checkpoint_interval: int = 0
    encoder: str = "atgrl"
    topo_dims: tuple[int, ...] = (64, 32)
    temporal_dims: tuple[int, ...] = (32, 16)
    gcn_dims: tuple[int, int] = (32, 16)
    causal: bool = True
    topo_activation: str = "elu"
    assign_mode: str = "pooled"
    reg_literal: bool = False
    disc_hidden: int = 64
    prior: str = "mixture"
    prior_weights: tuple[float, ...] | None = None
    prior_stddev: float = 1.0

    def __post_init__(self):
        for key in ("topo_dims", "temporal_dims", "gcn_dims"):
            object.__setattr__(self, key, tuple(int(v) for v in getattr(self, key)))
        if self.prior_weights is not None:
            object.__setattr__(self, "prior_weights", tuple(float(v) for v in self.prior_weights))
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.weight_decay < 0 or self.lam < 0:
            raise ValueError("weight_decay and lambda must be non-negative")
        if self.d_steps < 0 or self.g_steps < 1:
            raise ValueError("need d_steps >= 0 and g_steps >= 1")
        if self.assign_mode not in ASSIGN_MODES:
            raise ValueError(f"assign_mode must be one of {ASSIGN_MODES}")
        if self.prior not in PRIOR_KINDS:
            raise ValueError(f"prior must be one of {PRIOR_KINDS}")
        if self.checkpoint_interval < 0:
            raise ValueError("checkpoint_interval must be non-negative")

    def encoder_config(self, in_dim: int) -> EncoderConfig:
        return EncoderConfig(
            in_dim=in_dim,
            kind=self.encoder,
            topo_dims=self.topo_dims,
            temporal_dims=self.temporal_dims,
            gcn_dims=self.gcn_dims,
            causal=self.causal,
            communities=self.communities,
            topo_activation=self.topo_activation,
        )

    def prior_spec(self, dim: int) -> PriorSpec:
        if self.prior == "gaussian":
            return gaussian_prior(dim)
        if self.prior_weights is not None:
            return mixture_prior(len(self.prior_weights), dim, np.array(self.prior_weights), self.prior_stddev)
        return mixture_prior(self.communities, dim, None, self.prior_stddev)

    def to_dict(self) -> dict:
        out = asdict(self)
        for key, val in out.items():
            if isinstance(val, tuple):
                out[key] = list(val)
        return out

    @classmethod
    def from_dict(cls, payload: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(payload) - known
        if unknown:
            raise ValueError(f"unknown training config keys: {sorted(unknown)}")
        return cls(**payload)


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adam_step(
    params: list[np.ndarray],
    grads: list[np.ndarray | None],
    state: AdamState,
    lr: float,
    weight_decay: float = 0.0,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[list[np.ndarray], AdamState]:
    """Bias-corrected Adam with L2 weight decay folded into the gradient."""
    if len(params) != len(grads):
        raise ValueError(f"{len(params)} parameters but {len(grads)} gradients")
    if not state.m:
        state = AdamState(0, [np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])
    step = state.step + 1
    new_params, new_m, new_v = [], [], []
    c1 = 1.0 - beta1**step
    c2 = 1.0 - beta2**step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        g = np.zeros_like(p) if g is None else g
        if g.shape != p.shape:
            raise ad.ShapeError(f"gradient shape {g.shape} does not match parameter shape {p.shape}")
        if weight_decay:
            g = g + weight_decay * p
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        new_params.append(p - lr * (m / c1) / (np.sqrt(v / c2) + eps))
        new_m.append(m)
        new_v.append(v)
    return new_params, AdamState(step, new_m, new_v)


class Adam:
    """Adam over a fixed list of tensors, updating ``tensor.data`` in place."""

    def __init__(self, params: list[Tensor], lr: float, weight_decay: float = 0.0):
        self.params = list(params)
        self.lr = lr
        self.weight_decay = weight_decay
        self.state = AdamState()

    def zero_grad(self) -> None:
        ad.zero_grad(self.params)

    def step(self) -> None:
        new, self.state = adam_step(
            [p.data for p in self.params], [p.grad for p in self.params], self.state, self.lr, self.weight_decay
        )
        for p, value in zip(self.params, new):
            p.data = value


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


@dataclass
class EpochRecord:
    epoch: int
    l_re: float
    l_g: float
    l_d: float
    l_mm: float
    l_total: float
    wall_time: float = 0.0

    def to_dict(self, include_wall_time: bool = False) -> dict:
        out = asdict(self)
        if not include_wall_time:
            out.pop("wall_time")
        return out


@dataclass
class TrainLog:
    records: list[EpochRecord] = field(default_factory=list)
    final_metrics: dict | None = None

    def to_jsonl(self, include_wall_time: bool = False) -> str:
        return "".join(json.dumps(r.to_dict(include_wall_time), sort_keys=True) + "\n" for r in self.records)

    def timing_jsonl(self) -> str:
        return "".join(json.dumps({"epoch": r.epoch, "wall_time": r.wall_time}) + "\n" for r in self.records)


@dataclass
class TrainResult:
    encoder: EncoderParams
    discriminator: DiscriminatorParams
    log: TrainLog
    config: TrainConfig


@dataclass
class LossTerms:
    l_re: Tensor
    l_g: Tensor
    l_mm: Tensor
    total: Tensor


class Objective:
    """Everything about the graph the losses need, computed once."""

    def __init__(self, g: DynamicGraph, cfg: TrainConfig):
        self.g = g
        self.cfg = cfg
        self.targets = reconstruction_targets(g)
        self.contexts = [modularity_context(a) for a in g.adjacencies]

    def assignments(self, enc: EncoderParams, z: Tensor):
        g = self.g
        if self.cfg.assign_mode == "pooled":
            return soft_assign(snapshot_rows(z, g.n, g.t - 1), enc.head)
        return [soft_assign(snapshot_rows(z, g.n, t), enc.head) for t in range(g.t)]

    def generator_terms(self, enc: EncoderParams, disc: DiscriminatorParams, z: Tensor) -> LossTerms:
        g, cfg = self.g, self.cfg
        logits = [decode_logits(snapshot_rows(z, g.n, t)) for t in range(g.t)]
        l_re = reconstruction_loss_from_logits(logits, self.targets)
        l_g = generator_loss(disc, z)
        l_mm = measurable_modularity_loss(
            self.contexts, self.assignments(enc, z), cfg.lam, normalized_reg=not cfg.reg_literal
        )
        total = ad.scale(l_re, cfg.w_re) + ad.scale(l_g, cfg.w_g) + ad.scale(l_mm, cfg.w_mm)
        return LossTerms(l_re, l_g, l_mm, total)


def _finite(epoch: int, **terms: float) -> None:
    for name, value in terms.items():
        if not math.isfinite(value):
            raise NumericalError(epoch, name, value)


def train(
    g: DynamicGraph,
    cfg: TrainConfig,
    checkpoint_path: str | Path | None = None,
    init: tuple[EncoderParams, DiscriminatorParams] | None = None,
    callback=None,
) -> TrainResult:
    """Train encoder and discriminator; each epoch runs all D steps, then all G steps.

    ``callback(record, enc, disc)``, when given, runs after every epoch.
    """
    seeds = np.random.SeedSequence(cfg.seed).spawn(2)
    init_rng, prior_rng = (np.random.default_rng(s) for s in seeds)
    if init is None:
        enc = init_encoder(cfg.encoder_config(g.d), init_rng)
        disc = init_discriminator(enc.config.embed_dim, cfg.disc_hidden, init_rng)
    else:
        enc, disc = init
    prior = cfg.prior_spec(enc.config.embed_dim)
    objective = Objective(g, cfg)
    opt_e = Adam(enc.parameters(), cfg.lr, cfg.weight_decay)
    opt_d = Adam(disc.parameters(), cfg.lr, cfg.weight_decay)
    train_log = TrainLog()
    start = time.perf_counter()

    for epoch in range(1, cfg.epochs + 1):
        z = encode(enc, g)
        z_fixed = z.detach()
        l_d_value = None
        for _ in range(max(cfg.d_steps, 1)):
            z_prior = sample_prior(prior, z_fixed.shape[0], prior_rng)
            l_d = discriminator_loss(disc, z_prior, z_fixed)
            if l_d_value is None:
                l_d_value = l_d.item()
            if cfg.d_steps == 0:
                break  # value is logged, no update
            opt_d.zero_grad()
            ad.backward(l_d)
            opt_d.step()

        record = None
        for step in range(cfg.g_steps):
            if step > 0:
                z = encode(enc, g)
            terms = objective.generator_terms(enc, disc, z)
            if record is None:
                record = EpochRecord(
                    epoch, terms.l_re.item(), terms.l_g.item(), l_d_value, terms.l_mm.item(), terms.total.item()
                )
                _finite(
                    epoch, L_RE=record.l_re, L_G=record.l_g, L_D=record.l_d, L_MM=record.l_mm, L_total=record.l_total
                )
            opt_e.zero_grad()
            ad.backward(terms.total)
            opt_e.step()
        record.wall_time = time.perf_counter() - start
        train_log.records.append(record)
        if callback is not None:
            callback(record, enc, disc)
        if checkpoint_path is not None and cfg.checkpoint_interval and epoch % cfg.checkpoint_interval == 0:
            save_checkpoint(checkpoint_path, enc, disc, cfg)

    if g.labels is not None:
        det = detect(enc, g, cfg.communities, cfg.assign_mode)
        try:
            train_log.final_metrics = evaluate(g, det.labels).to_dict(percent=False)
        except MetricUndefinedError as exc:
            log.warning("final metrics unavailable: %s", exc)
            train_log.final_metrics = {"error": str(exc)}
    if checkpoint_path is not None:
        save_checkpoint(checkpoint_path, enc, disc, cfg)
    return TrainResult(enc, disc, train_log, cfg)


# ---------------------------------------------------------------------------
# detection
# ---------------------------------------------------------------------------


@dataclass
class Detection:
    labels: np.ndarray  # T x N
    assignments: np.ndarray  # T x N x C

    def rows(self) -> list[tuple[int, int, int, float]]:
        """(timestep, node, community, max_probability) with 1-based timesteps."""
        out = []
        for t in range(self.labels.shape[0]):
            for i in range(self.labels.shape[1]):
                out.append((t + 1, i, int(self.labels[t, i]), float(self.assignments[t, i].max())))
        return out

    def to_csv(self) -> str:
        lines = ["timestep,node,community,max_probability"]
        lines += [f"{t},{i},{c},{p!r}" for t, i, c, p in self.rows()]
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "assignments": [
                {"timestep": t, "node": i, "community": c, "max_probability": p} for t, i, c, p in self.rows()
            ]
        }


def detect(params: EncoderParams, g: DynamicGraph, c: int | None = None, mode: str = "pooled") -> Detection:
    """Encode, soft-assign, harden. Pooled mode broadcasts the final-timestep partition."""
    if mode not in ASSIGN_MODES:
        raise ValueError(f"mode must be one of {ASSIGN_MODES}")
    if c is not None and c != params.config.communities:
        raise EncoderConfigError(f"checkpoint was trained for {params.config.communities} communities, not {c}")
    z = encode(params, g)
    steps = [g.t - 1] if mode == "pooled" else range(g.t)
    probs = np.stack([soft_assign(snapshot_rows(z, g.n, t).detach(), params.head).data for t in steps])
    if mode == "pooled":
        probs = np.repeat(probs, g.t, axis=0)
    labels = np.stack([harden(p) for p in probs])
    return Detection(labels, probs)


def detect_kmeans(params: EncoderParams, g: DynamicGraph, k: int, mode: str = "pooled", seed: int = 0) -> Detection:
    """k-means on the embeddings instead of the modularity head."""
    z = encode(params, g).data
    seq = z.reshape(g.t, g.n, -1)
    steps = [g.t - 1] if mode == "pooled" else range(g.t)
    labels = np.stack([kmeans(seq[t], k, seed=seed) for t in steps])
    if mode == "pooled":
        labels = np.repeat(labels, g.t, axis=0)
    probs = np.zeros((g.t, g.n, k))
    for t in range(g.t):
        probs[t, np.arange(g.n), labels[t]] = 1.0
    return Detection(labels, probs)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def checkpoint_dict(enc: EncoderParams, disc: DiscriminatorParams, cfg: TrainConfig | None = None) -> dict:
    payload = {"version": CHECKPOINT_VERSION, **enc.to_dict(), "discriminator": disc.to_dict()}
    if cfg is not None:
        payload["train_config"] = cfg.to_dict()
    return payload


def save_checkpoint(path, enc: EncoderParams, disc: DiscriminatorParams, cfg: TrainConfig | None = None) -> None:
    jsonio.write_json(path, checkpoint_dict(enc, disc, cfg))


def load_checkpoint(path) -> tuple[EncoderParams, DiscriminatorParams, TrainConfig | None]:
    try:
        payload = jsonio.read_json(path)
    except json.JSONDecodeError as exc:
        raise EncoderConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    if payload.get("version") != CHECKPOINT_VERSION:
        raise EncoderConfigError(f"{path}: unsupported checkpoint version {payload.get('version')!r}")
    enc = EncoderParams.from_dict(payload)
    disc = DiscriminatorParams.from_dict(payload["discriminator"])
    cfg = TrainConfig.from_dict(payload["train_config"]) if "train_config" in payload else None
    return enc, disc, cfg
