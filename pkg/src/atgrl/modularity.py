"""Modularity, soft community assignment and the differentiable modularity loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


class DegenerateGraphError(ValueError):
    """The graph has no edges (2m = 0)."""


@dataclass(frozen=True)
class ModularityContext:
    b: np.ndarray
    degrees: np.ndarray
    two_m: float
    abs_weight: float  # sum |A_ij|, the loss normaliser

    @property
    def n(self) -> int:
        return self.b.shape[0]


def modularity_context(adj: np.ndarray) -> ModularityContext:
    adj = np.asarray(adj, dtype=np.float64)
    if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
        raise ValueError(f"adjacency must be square, got {adj.shape}")
    degrees = adj.sum(axis=1)
    two_m = float(adj.sum())
    if two_m <= 0:
        raise DegenerateGraphError("modularity is undefined for a graph without edges")
    b = adj - np.outer(degrees, degrees) / two_m
    return ModularityContext(b, degrees, two_m, float(np.abs(adj).sum()))


def modularity_q(ctx: ModularityContext, labels) -> float:
    """``Q = (1/2m) * sum_ij B_ij [label_i == label_j]``."""
    labels = np.asarray(labels)
    if labels.shape != (ctx.n,):
        raise ValueError(f"{labels.size} labels for {ctx.n} nodes")
    same = labels[:, None] == labels[None, :]
    return float(ctx.b[same].sum() / ctx.two_m)


def assignment_logits(z, head: Tensor | None = None) -> Tensor:
    """Map ``f'``-dimensional embeddings to one logit per community."""
    z = ad.as_tensor(z)
    return z if head is None else z @ head


def soft_assign(z, head: Tensor | None = None) -> Tensor:
    """Row-stochastic assignment ``P = softmax(z @ head)``; no head when ``f' == C``."""
    return ad.row_softmax(assignment_logits(z, head))


def harden(p) -> np.ndarray:
    """Row-wise argmax; ``np.argmax`` resolves ties toward the lowest index."""
    data = p.data if isinstance(p, Tensor) else np.asarray(p)
    return np.argmax(data, axis=1).astype(np.int64)


def one_hot(labels, c: int | None = None) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    c = int(labels.max()) + 1 if c is None else c
    out = np.zeros((labels.size, c))
    out[np.arange(labels.size), labels] = 1.0
    return out


def modularity_term(ctx: ModularityContext, p) -> Tensor:
    """``-tr(P^T B P) / sum|A|``."""
    p = ad.as_tensor(p)
    return ad.scale(ad.trace(p.T @ (Tensor(ctx.b) @ p)), -1.0 / ctx.abs_weight)


def size_regularizer(p, normalized: bool = True) -> Tensor:
    """Squared deviation of community sizes from ``1/C``.

    With ``normalized`` the column sums are divided by N first, so a balanced
    assignment is the minimiser; otherwise the raw column sums are compared.
    """
    p = ad.as_tensor(p)
    n, c = p.shape
    sizes = ad.reduce_sum(p, axis=0)
    if normalized:
        sizes = ad.scale(sizes, 1.0 / n)
    return ad.reduce_sum(ad.square(sizes - 1.0 / c))


def measurable_modularity_loss(
    contexts: list[ModularityContext] | ModularityContext,
    p,
    lam: float = 0.5,
    normalized_reg: bool = True,
) -> Tensor:
    """Modularity loss averaged over snapshots.

    ``p`` is a single assignment shared by every snapshot or a list with one
    assignment per snapshot.
    """
    if lam < 0:
        raise ValueError(f"lambda must be non-negative, got {lam}")
    if isinstance(contexts, ModularityContext):
        contexts = [contexts]
    shared = not isinstance(p, (list, tuple))
    ps = [p] * len(contexts) if shared else list(p)
    if len(ps) != len(contexts):
        raise ValueError(f"{len(ps)} assignments for {len(contexts)} snapshots")
    total = None
    for ctx, pt in zip(contexts, ps):
        term = modularity_term(ctx, pt)
        total = term if total is None else total + term
    total = ad.scale(total, 1.0 / len(contexts))
    if lam == 0:
        return total
    if shared:
        reg = size_regularizer(ps[0], normalized_reg)
    else:
        regs = [size_regularizer(pt, normalized_reg) for pt in ps]
        reg = regs[0]
        for r in regs[1:]:
            reg = reg + r
        reg = ad.scale(reg, 1.0 / len(regs))
    return total + ad.scale(reg, lam)
