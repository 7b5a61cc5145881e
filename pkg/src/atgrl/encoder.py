"""Temporal graph attention encoder and the two-layer GCN ablation encoder.

Embeddings for all snapshots are carried as one stacked ``(T*N) x f'`` tensor
in time-major order: row ``t*N + i`` holds node ``i`` at snapshot ``t``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .graph import DynamicGraph

ENCODER_KINDS = ("atgrl", "gcn")
TOPO_ACTIVATIONS = ("elu", "sigmoid")
_ACTIVATIONS = {"elu": ad.elu, "sigmoid": ad.sigmoid}


class EncoderConfigError(ValueError):
    """Encoder dimensions do not chain or do not match the input graph."""


@dataclass(frozen=True)
class EncoderConfig:
    in_dim: int
    kind: str = "atgrl"
    topo_dims: tuple[int, ...] = (64, 32)
    temporal_dims: tuple[int, ...] = (32, 16)
    gcn_dims: tuple[int, int] = (32, 16)
    causal: bool = True
    communities: int = 15
    topo_activation: str = "elu"

    def __post_init__(self):
        object.__setattr__(self, "topo_dims", tuple(int(v) for v in self.topo_dims))
        object.__setattr__(self, "temporal_dims", tuple(int(v) for v in self.temporal_dims))
        object.__setattr__(self, "gcn_dims", tuple(int(v) for v in self.gcn_dims))
        if self.topo_activation not in TOPO_ACTIVATIONS:
            raise EncoderConfigError(f"topo_activation must be one of {TOPO_ACTIVATIONS}")
        if self.kind not in ENCODER_KINDS:
            raise EncoderConfigError(f"unknown encoder kind {self.kind!r}; choose from {ENCODER_KINDS}")
        if self.in_dim < 1 or self.communities < 1:
            raise EncoderConfigError("in_dim and communities must be positive")
        if self.kind == "atgrl" and (not self.topo_dims or not self.temporal_dims):
            raise EncoderConfigError("the attention encoder needs at least one layer of each kind")
        if self.kind == "gcn" and len(self.gcn_dims) != 2:
            raise EncoderConfigError("the GCN encoder has exactly two layers")
        if any(v < 1 for v in self.topo_dims + self.temporal_dims + self.gcn_dims):
            raise EncoderConfigError("layer widths must be positive")

    @property
    def embed_dim(self) -> int:
        return self.temporal_dims[-1] if self.kind == "atgrl" else self.gcn_dims[-1]

    def to_dict(self) -> dict:
        out = asdict(self)
        for key in ("topo_dims", "temporal_dims", "gcn_dims"):
            out[key] = list(out[key])
        return out


@dataclass
class TopoLayerParams:
    W: Tensor
    a: Tensor  # 2f x 1; first half scores the neighbour, second half the centre node


@dataclass
class TemporalLayerParams:
    W_q: Tensor
    W_k: Tensor
    W_v: Tensor


@dataclass
class EncoderParams:
    config: EncoderConfig
    topo_layers: list[TopoLayerParams] = field(default_factory=list)
    temporal_layers: list[TemporalLayerParams] = field(default_factory=list)
    gcn_weights: list[Tensor] = field(default_factory=list)
    head: Tensor | None = None

    def named_tensors(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for i, layer in enumerate(self.topo_layers):
            out[f"topo{i}.W"] = layer.W
            out[f"topo{i}.a"] = layer.a
        for i, layer in enumerate(self.temporal_layers):
            out[f"temporal{i}.W_q"] = layer.W_q
            out[f"temporal{i}.W_k"] = layer.W_k
            out[f"temporal{i}.W_v"] = layer.W_v
        for i, w in enumerate(self.gcn_weights):
            out[f"gcn.W{i + 1}"] = w
        if self.head is not None:
            out["head.W"] = self.head
        return out

    def parameters(self) -> list[Tensor]:
        return list(self.named_tensors().values())

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "params": {name: t.data for name, t in self.named_tensors().items()},
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "EncoderParams":
        try:
            cfg_raw = dict(payload["config"])
            cfg = EncoderConfig(**cfg_raw)
            arrays = {k: np.array(v, dtype=np.float64) for k, v in payload["params"].items()}
        except (KeyError, TypeError) as exc:
            raise EncoderConfigError(f"malformed encoder checkpoint: {exc}") from exc
        expected = _expected_shapes(cfg)
        if set(arrays) != set(expected):
            raise EncoderConfigError(
                f"checkpoint parameters {sorted(arrays)} do not match the configured layers {sorted(expected)}"
            )
        for name, shape in expected.items():
            if arrays[name].shape != shape:
                raise EncoderConfigError(f"parameter {name} has shape {arrays[name].shape}, expected {shape}")
        params = _build(cfg, lambda name, shape: arrays[name])
        return params


def _expected_shapes(cfg: EncoderConfig) -> dict[str, tuple[int, int]]:
    shapes: dict[str, tuple[int, int]] = {}
    if cfg.kind == "atgrl":
        prev = cfg.in_dim
        for i, f in enumerate(cfg.topo_dims):
            shapes[f"topo{i}.W"] = (prev, f)
            shapes[f"topo{i}.a"] = (2 * f, 1)
            prev = f
        for i, f in enumerate(cfg.temporal_dims):
            for proj in ("W_q", "W_k", "W_v"):
                shapes[f"temporal{i}.{proj}"] = (prev, f)
            prev = f
    else:
        h, f = cfg.gcn_dims
        shapes["gcn.W1"] = (cfg.in_dim, h)
        shapes["gcn.W2"] = (h, f)
    if cfg.embed_dim != cfg.communities:
        shapes["head.W"] = (cfg.embed_dim, cfg.communities)
    return shapes


def _build(cfg: EncoderConfig, make) -> EncoderParams:
    def t(name):
        return Tensor(make(name, _expected_shapes(cfg)[name]), requires_grad=True, name=name)

    names = _expected_shapes(cfg)
    params = EncoderParams(config=cfg)
    if cfg.kind == "atgrl":
        params.topo_layers = [TopoLayerParams(t(f"topo{i}.W"), t(f"topo{i}.a")) for i in range(len(cfg.topo_dims))]
        params.temporal_layers = [
            TemporalLayerParams(t(f"temporal{i}.W_q"), t(f"temporal{i}.W_k"), t(f"temporal{i}.W_v"))
            for i in range(len(cfg.temporal_dims))
        ]
    else:
        params.gcn_weights = [t("gcn.W1"), t("gcn.W2")]
    if "head.W" in names:
        params.head = t("head.W")
    return params


def glorot(shape: tuple[int, int], rng: np.random.Generator) -> np.ndarray:
    s = math.sqrt(6.0 / (shape[0] + shape[1]))
    return rng.uniform(-s, s, size=shape)


def init_encoder(cfg: EncoderConfig, rng: np.random.Generator) -> EncoderParams:
    return _build(cfg, lambda name, shape: glorot(shape, rng))


def check_compatible(params: EncoderParams, g: DynamicGraph) -> None:
    if params.config.in_dim != g.d:
        raise EncoderConfigError(f"encoder expects feature dimension {params.config.in_dim}, graph has d={g.d}")


# ---------------------------------------------------------------------------
# topological attention
# ---------------------------------------------------------------------------


def with_self_loops(adj: np.ndarray) -> np.ndarray:
    out = np.array(adj, dtype=np.float64)
    np.fill_diagonal(out, 1.0)
    return out


def topo_attention_forward(
    params: TopoLayerParams, x, adj: np.ndarray, return_attention: bool = False, activation: str = "elu"
):
    """One graph-attention layer over a single snapshot.

    Score for neighbour ``j`` of node ``i`` is ``sigmoid(A_ij * a^T [W x_j || W x_i])``,
    softmax-normalised over the closed neighbourhood (self-loop forced to 1).
    The aggregated messages pass through ``activation`` (``"elu"`` or ``"sigmoid"``).
    """
    x = ad.as_tensor(x)
    adj_loop = with_self_loops(adj)
    f = params.W.shape[1]
    g = x @ params.W
    score_nbr = g @ ad.slice_rows(params.a, 0, f)  # N x 1
    score_self = g @ ad.slice_rows(params.a, f, 2 * f)  # N x 1
    scores = ad.sigmoid(ad.mul(adj_loop, score_self + score_nbr.T))
    alpha = ad.row_softmax(scores, mask=adj_loop > 0)
    h = _ACTIVATIONS[activation](alpha @ g)
    return (h, alpha) if return_attention else h


# ---------------------------------------------------------------------------
# temporal attention
# ---------------------------------------------------------------------------


def temporal_mask(n_nodes: int, n_steps: int, causal: bool) -> np.ndarray:
    """Admissible (query, key) pairs for time-major stacked rows: same node, key not in the future."""
    step = np.repeat(np.arange(n_steps), n_nodes)
    node = np.tile(np.arange(n_nodes), n_steps)
    mask = node[:, None] == node[None, :]
    if causal:
        mask &= step[None, :] <= step[:, None]
    return mask


def temporal_attention_stacked(
    params: TemporalLayerParams, h, n_nodes: int, n_steps: int, causal: bool, return_attention: bool = False
):
    """Scaled dot-product attention over each node's own sequence, all nodes at once."""
    h = ad.as_tensor(h)
    f_out = params.W_q.shape[1]
    q = h @ params.W_q
    k = h @ params.W_k
    v = h @ params.W_v
    e = ad.scale(q @ k.T, 1.0 / math.sqrt(f_out))
    beta = ad.row_softmax(e, mask=temporal_mask(n_nodes, n_steps, causal))
    z = beta @ v
    return (z, beta) if return_attention else z


def temporal_attention_forward(params: TemporalLayerParams, h_seq, causal: bool = True, return_attention: bool = False):
    """Temporal attention for one node's ``T x f_in`` representation sequence."""
    h_seq = ad.as_tensor(h_seq)
    return temporal_attention_stacked(params, h_seq, 1, h_seq.shape[0], causal, return_attention)


# ---------------------------------------------------------------------------
# full encoders
# ---------------------------------------------------------------------------


def encode_atgrl(params: EncoderParams, g: DynamicGraph, attention: list | None = None) -> Tensor:
    act = params.config.topo_activation
    per_step = []
    for snap in g.snapshots:
        h: Tensor = Tensor(snap.features)
        for layer in params.topo_layers:
            h, alpha = topo_attention_forward(layer, h, snap.adjacency, return_attention=True, activation=act)
            if attention is not None:
                attention.append(("topo", alpha.data))
        per_step.append(h)
    z = per_step[0] if len(per_step) == 1 else ad.concat_rows(per_step)
    for layer in params.temporal_layers:
        z, beta = temporal_attention_stacked(layer, z, g.n, g.t, params.config.causal, return_attention=True)
        if attention is not None:
            attention.append(("temporal", beta.data))
    return z


def normalized_adjacency(adj: np.ndarray) -> np.ndarray:
    a = np.asarray(adj, dtype=np.float64) + np.eye(len(adj))
    inv_sqrt = 1.0 / np.sqrt(a.sum(axis=1))
    return a * inv_sqrt[:, None] * inv_sqrt[None, :]


def gcn_encode(weights: list[Tensor], g: DynamicGraph) -> Tensor:
    w1, w2 = weights
    out = []
    for snap in g.snapshots:
        a_n = normalized_adjacency(snap.adjacency)
        hidden = ad.relu(a_n @ (Tensor(snap.features) @ w1))
        out.append(a_n @ (hidden @ w2))
    return out[0] if len(out) == 1 else ad.concat_rows(out)


def encode(params: EncoderParams, g: DynamicGraph, attention: list | None = None) -> Tensor:
    """Stacked ``(T*N) x f'`` embeddings for every snapshot."""
    check_compatible(params, g)
    if params.config.kind == "gcn":
        return gcn_encode(params.gcn_weights, g)
    return encode_atgrl(params, g, attention)


def snapshot_rows(z: Tensor, n_nodes: int, step: int) -> Tensor:
    if z.shape[0] == n_nodes:
        return z
    return ad.slice_rows(z, step * n_nodes, (step + 1) * n_nodes)


def embedding_sequence(z: Tensor | np.ndarray, n_nodes: int) -> np.ndarray:
    """Reshape stacked embeddings to a ``T x N x f'`` array."""
    data = z.data if isinstance(z, Tensor) else np.asarray(z)
    return data.reshape(-1, n_nodes, data.shape[1]).copy()
