"""Community-quality metrics and the k-means baseline head.

NMI uses arithmetic-mean normalisation, ``I(a;b) / ((H(a) + H(b)) / 2)``.
Conductance of a community is ``cut(S) / min(vol(S), vol(V \\ S))``; lower is
better.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .graph import DynamicGraph
from .modularity import modularity_context, modularity_q

log = logging.getLogger(__name__)


class MetricUndefinedError(ValueError):
    """The metric has no defined value for this input."""


def _check_pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.int64).ravel()
    b = np.asarray(b, dtype=np.int64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"partitions cover different node counts: {a.size} vs {b.size}")
    return a, b


def contingency(a, b) -> np.ndarray:
    a, b = _check_pair(a, b)
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max(initial=-1) + 1, bi.max(initial=-1) + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    return table


def _entropy(counts: np.ndarray, n: int) -> float:
    p = counts[counts > 0] / n
    return float(-(p * np.log(p)).sum())


def nmi(a, b) -> float:
    table = contingency(a, b)
    n = int(table.sum())
    if n == 0:
        raise ValueError("NMI of empty partitions")
    ha = _entropy(table.sum(axis=1), n)
    hb = _entropy(table.sum(axis=0), n)
    if ha == 0 and hb == 0:
        return 1.0
    if ha == 0 or hb == 0:
        return 0.0
    nz = table > 0
    pij = table[nz] / n
    outer = np.outer(table.sum(axis=1), table.sum(axis=0))[nz] / (n * n)
    mi = float((pij * np.log(pij / outer)).sum())
    return float(min(max(mi / ((ha + hb) / 2.0), 0.0), 1.0))


def _pairs(x: np.ndarray) -> float:
    return float((x * (x - 1) // 2).sum())


def pairwise_f1(a, b) -> float:
    """F1 over unordered node pairs; ``b`` plays the predicted side, ``a`` the truth."""
    a, b = _check_pair(a, b)
    if a.size < 2:
        raise ValueError("pairwise F1 needs at least two nodes")
    table = contingency(a, b)
    both = _pairs(table)
    truth = _pairs(table.sum(axis=1))
    pred = _pairs(table.sum(axis=0))
    if truth == 0 and pred == 0:
        return 1.0
    if both == 0:
        return 0.0
    precision, recall = both / pred, both / truth
    return 2 * precision * recall / (precision + recall)


def community_conductance(adj: np.ndarray, labels) -> dict[int, float | None]:
    """Conductance per label; ``None`` where the smaller volume is zero."""
    adj = np.asarray(adj, dtype=np.float64)
    labels = np.asarray(labels)
    degrees = adj.sum(axis=1)
    total = degrees.sum()
    if total <= 0:
        raise MetricUndefinedError("conductance is undefined for a graph without edges")
    out: dict[int, float | None] = {}
    for c in np.unique(labels):
        inside = labels == c
        vol = degrees[inside].sum()
        denom = min(vol, total - vol)
        if denom <= 0:
            out[int(c)] = None
            continue
        cut = adj[np.ix_(inside, ~inside)].sum()
        out[int(c)] = float(cut / denom)
    return out


def conductance(adj: np.ndarray, labels) -> float:
    """Mean conductance over communities with non-zero minimum volume."""
    per = community_conductance(adj, labels)
    values = [v for v in per.values() if v is not None]
    skipped = [c for c, v in per.items() if v is None]
    if skipped:
        log.info("conductance: skipped communities %s with zero minimum volume", skipped)
    if not values:
        raise MetricUndefinedError("every community has zero minimum volume; conductance undefined")
    return float(np.mean(values))


# ---------------------------------------------------------------------------
# k-means
# ---------------------------------------------------------------------------


def _sq_dists(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    d = (points**2).sum(axis=1)[:, None] - 2 * points @ centers.T + (centers**2).sum(axis=1)[None, :]
    return np.maximum(d, 0.0)


def _plusplus(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(points)
    centers = [points[rng.integers(n)]]
    for _ in range(1, k):
        d2 = _sq_dists(points, np.array(centers)).min(axis=1)
        total = d2.sum()
        idx = rng.integers(n) if total <= 0 else rng.choice(n, p=d2 / total)
        centers.append(points[idx])
    return np.array(centers)


def wcss(points: np.ndarray, labels: np.ndarray) -> float:
    points = np.asarray(points, dtype=np.float64)
    total = 0.0
    for c in np.unique(labels):
        members = points[labels == c]
        total += float(((members - members.mean(axis=0)) ** 2).sum())
    return total


def lloyd(points: np.ndarray, centers: np.ndarray, max_iters: int = 300) -> tuple[np.ndarray, list[float]]:
    """Lloyd iterations from the given centres; returns labels and per-iteration WCSS."""
    history = []
    labels = np.argmin(_sq_dists(points, centers), axis=1)
    for _ in range(max_iters):
        new_centers = centers.copy()
        for j in range(len(centers)):
            members = points[labels == j]
            if len(members):
                new_centers[j] = members.mean(axis=0)
        centers = new_centers
        history.append(float(((points - centers[labels]) ** 2).sum()))
        new_labels = np.argmin(_sq_dists(points, centers), axis=1)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return labels, history


def kmeans(points, k: int, seed: int = 0, max_iters: int = 300, restarts: int = 10) -> np.ndarray:
    """Best-of-``restarts`` Lloyd's algorithm with k-means++ seeding."""
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    if not 1 <= k <= n:
        raise ValueError(f"k={k} must lie in [1, {n}]")
    rng = np.random.default_rng(seed)
    best, best_cost = None, np.inf
    for _ in range(restarts):
        labels, _ = lloyd(points, _plusplus(points, k, rng), max_iters)
        cost = wcss(points, labels)
        if cost < best_cost:
            best, best_cost = labels, cost
    return best.astype(np.int64)


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


@dataclass
class MetricsReport:
    conductance: float
    modularity: float
    nmi: float | None = None
    pairwise_f1: float | None = None
    per_timestep: list[dict] = field(default_factory=list)

    def to_dict(self, percent: bool = True) -> dict:
        """Serialisable form; ``percent`` scales every metric by 100."""
        k = 100.0 if percent else 1.0

        def render(entry: dict) -> dict:
            return {key: (val * k if isinstance(val, float) else val) for key, val in entry.items() if val is not None}

        summary = {
            "conductance": self.conductance,
            "modularity": self.modularity,
            "nmi": self.nmi,
            "pairwise_f1": self.pairwise_f1,
        }
        return {
            "scale": "percent" if percent else "fraction",
            "mean": render(summary),
            "per_timestep": [render(e) for e in self.per_timestep],
        }

    def to_csv(self, percent: bool = True) -> str:
        data = self.to_dict(percent)
        lines = ["timestep,metric,value"]
        for entry in data["per_timestep"]:
            for key, val in entry.items():
                if key != "timestep":
                    lines.append(f"{entry['timestep']},{key},{val!r}")
        for key, val in data["mean"].items():
            lines.append(f"mean,{key},{val!r}")
        return "\n".join(lines) + "\n"


def evaluate(g: DynamicGraph, partitions, truth=None) -> MetricsReport:
    """Per-timestep and mean metrics.

    ``partitions`` is one label vector (broadcast over all snapshots) or a
    ``T x N`` array. ``truth`` defaults to the graph's own labels.
    """
    parts = np.asarray(partitions, dtype=np.int64)
    if parts.ndim == 1:
        parts = np.broadcast_to(parts, (g.t, g.n))
    if parts.shape != (g.t, g.n):
        raise ValueError(f"partitions shape {parts.shape} does not match (t={g.t}, n={g.n})")
    if truth is None:
        truth = g.labels
    if truth is not None:
        truth = np.asarray(truth, dtype=np.int64)
        if truth.ndim == 1:
            truth = np.broadcast_to(truth, (g.t, g.n))
        if truth.shape != (g.t, g.n):
            raise ValueError(f"truth shape {truth.shape} does not match (t={g.t}, n={g.n})")
    rows = []
    for t, adj in enumerate(g.adjacencies):
        entry: dict = {
            "timestep": t + 1,
            "conductance": conductance(adj, parts[t]),
            "modularity": modularity_q(modularity_context(adj), parts[t]),
        }
        if truth is not None:
            entry["nmi"] = nmi(truth[t], parts[t])
            entry["pairwise_f1"] = pairwise_f1(truth[t], parts[t])
        rows.append(entry)

    def avg(key):
        return float(np.mean([r[key] for r in rows])) if key in rows[0] else None

    return MetricsReport(avg("conductance"), avg("modularity"), avg("nmi"), avg("pairwise_f1"), rows)
