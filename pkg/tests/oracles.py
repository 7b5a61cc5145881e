"""Independent reference computations used by the test-suite.

Nothing here imports the package under test; every oracle is a direct,
slow transcription of a definition (finite differences, pair enumeration,
exhaustive search).
"""

from __future__ import annotations

import itertools
import math
from collections import Counter

import numpy as np

FD_STEP = 1e-5


def central_difference(f, x: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    """Gradient of scalar ``f`` at ``x`` by central differences, one entry at a time."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + h
        up = f(x)
        x[idx] = orig - h
        down = f(x)
        x[idx] = orig
        grad[idx] = (up - down) / (2 * h)
    return grad


def max_rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Largest elementwise ``|a - fd| / max(|a|, |fd|, 1e-8)``."""
    a = np.asarray(analytic, dtype=np.float64)
    b = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


def gradcheck_max_error(loss_of, tensors, h: float = FD_STEP, abs_floor: float = 0.0) -> float:
    """Compare ``.grad`` of every tensor with finite differences of ``loss_of()``.

    ``loss_of`` rebuilds the forward pass from the tensors' current ``data`` and
    returns a float. ``abs_floor`` drops entries where both gradients are below
    that magnitude (pure round-off noise); it defaults to 0, meaning nothing is
    dropped.
    """
    worst = 0.0
    for t in tensors:
        base = t.data.copy()

        def f(x, t=t):
            t.data = x
            return loss_of()

        fd = central_difference(f, base, h)
        t.data = base
        a = t.grad if t.grad is not None else np.zeros_like(base)
        keep = np.maximum(np.abs(a), np.abs(fd)) >= abs_floor
        if keep.any():
            worst = max(worst, max_rel_error(a[keep], fd[keep]))
    return worst


# ---------------------------------------------------------------------------
# community metrics
# ---------------------------------------------------------------------------


def brute_modularity(adj, labels) -> float:
    """``Q = (1/2m) sum_ij [A_ij - k_i k_j / 2m] delta(c_i, c_j)`` as a double loop."""
    adj = np.asarray(adj, dtype=float)
    n = len(adj)
    k = [sum(adj[i]) for i in range(n)]
    two_m = sum(k)
    total = 0.0
    for i in range(n):
        for j in range(n):
            if labels[i] == labels[j]:
                total += adj[i][j] - k[i] * k[j] / two_m
    return total / two_m


def brute_nmi(a, b) -> float:
    """Arithmetic-mean NMI from plain dictionaries of counts."""
    n = len(a)
    ca, cb, cab = Counter(a), Counter(b), Counter(zip(a, b))
    ha = -sum(v / n * math.log(v / n) for v in ca.values())
    hb = -sum(v / n * math.log(v / n) for v in cb.values())
    if ha == 0 and hb == 0:
        return 1.0
    if ha == 0 or hb == 0:
        return 0.0
    mi = sum(v / n * math.log((v / n) / ((ca[x] / n) * (cb[y] / n))) for (x, y), v in cab.items())
    return mi / ((ha + hb) / 2)


def brute_pairwise_f1(truth, pred) -> float:
    """F1 over explicitly enumerated unordered node pairs."""
    pairs = list(itertools.combinations(range(len(truth)), 2))
    t = {p for p in pairs if truth[p[0]] == truth[p[1]]}
    q = {p for p in pairs if pred[p[0]] == pred[p[1]]}
    if not t and not q:
        return 1.0
    both = len(t & q)
    if both == 0:
        return 0.0
    precision, recall = both / len(q), both / len(t)
    return 2 * precision * recall / (precision + recall)


def brute_conductance(adj, labels) -> float:
    adj = np.asarray(adj, dtype=float)
    n = len(adj)
    deg = adj.sum(axis=1)
    vol_all = deg.sum()
    values = []
    for c in sorted(set(labels)):
        members = [i for i in range(n) if labels[i] == c]
        others = [i for i in range(n) if labels[i] != c]
        cut = sum(adj[i][j] for i in members for j in others)
        vol = sum(deg[i] for i in members)
        denom = min(vol, vol_all - vol)
        if denom > 0:
            values.append(cut / denom)
    return sum(values) / len(values)


def all_two_partitions(n: int):
    """Every labelling of ``n`` items into exactly two non-empty groups (up to swap)."""
    for mask in range(1, 2 ** (n - 1)):
        yield [(mask >> i) & 1 for i in range(n)]


def wcss_of(points: np.ndarray, labels) -> float:
    total = 0.0
    for c in set(labels):
        members = points[[i for i in range(len(points)) if labels[i] == c]]
        total += float(((members - members.mean(axis=0)) ** 2).sum())
    return total


def same_partition(a, b) -> bool:
    """Equal up to relabelling: the label pairs define a bijection."""
    pairs = set(zip(list(a), list(b)))
    return len(pairs) == len({x for x, _ in pairs}) == len({y for _, y in pairs})


# ---------------------------------------------------------------------------
# small fixed graphs
# ---------------------------------------------------------------------------


def edges_to_adj(n: int, edges) -> np.ndarray:
    adj = np.zeros((n, n))
    for i, j in edges:
        adj[i, j] = adj[j, i] = 1.0
    return adj


def two_disjoint_edges() -> tuple[np.ndarray, list[int]]:
    return edges_to_adj(4, [(0, 1), (2, 3)]), [0, 0, 1, 1]


def two_triangles_with_bridge() -> tuple[np.ndarray, list[int]]:
    edges = [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (2, 3)]
    return edges_to_adj(6, edges), [0, 0, 0, 1, 1, 1]


def random_binary_graph(rng: np.random.Generator, n: int, p: float = 0.5) -> np.ndarray:
    """Symmetric 0/1 adjacency with at least one edge."""
    while True:
        upper = np.triu(rng.random((n, n)) < p, 1).astype(float)
        if upper.any():
            return upper + upper.T
