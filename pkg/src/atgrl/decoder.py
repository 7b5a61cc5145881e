"""Inner-product decoder and cross-entropy reconstruction loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .graph import DynamicGraph

EPS = 1e-7


class TargetError(ValueError):
    """Reconstruction targets fall outside [0, 1]."""


@dataclass
class ReconstructionReport:
    a_hat: list[np.ndarray]
    loss: float


def decode(z) -> Tensor:
    """Reconstructed connectivity ``sigmoid(Z Z^T)``."""
    z = ad.as_tensor(z)
    return ad.sigmoid(z @ z.T)


def reconstruction_targets(
    g: DynamicGraph, binarize: bool = False, threshold: float = 0.0, self_loops: bool = True
) -> list[np.ndarray]:
    """Per-snapshot targets for the decoder.

    With ``self_loops`` the diagonal target is 1, the same closed neighbourhood
    the encoder attends over. A zero diagonal target would instead penalise
    every embedding's squared norm, which drags all embeddings toward the
    origin.
    """
    out = []
    for a in g.adjacencies:
        target = (a > threshold).astype(np.float64) if binarize else np.array(a, dtype=np.float64)
        if self_loops:
            np.fill_diagonal(target, 1.0)
        out.append(target)
    return out


def reconstruction_loss(a_hat_seq, targets) -> Tensor:
    """Mean binary cross-entropy over all ``T * N^2`` entries.

    ``targets`` is either a :class:`DynamicGraph` (weighted adjacency used as
    soft targets) or a list of ``N x N`` arrays in ``[0, 1]``.
    """
    if isinstance(targets, DynamicGraph):
        targets = reconstruction_targets(targets)
    a_hat_seq = list(a_hat_seq)
    if len(a_hat_seq) != len(targets):
        raise ValueError(f"{len(a_hat_seq)} reconstructions for {len(targets)} targets")
    total = None
    count = 0
    for a_hat, target in zip(a_hat_seq, targets):
        target = np.asarray(target, dtype=np.float64)
        if target.min() < 0 or target.max() > 1:
            raise TargetError("reconstruction targets must lie in [0, 1]")
        p = ad.clamp(ad.as_tensor(a_hat), EPS, 1.0 - EPS)
        ll = ad.mul(target, ad.log(p)) + ad.mul(1.0 - target, ad.log(1.0 - p))
        term = ad.reduce_sum(ll)
        total = term if total is None else total + term
        count += target.size
    return ad.scale(total, -1.0 / count)


def reconstruction_loss_from_logits(logit_seq, targets) -> Tensor:
    """Same cross-entropy evaluated from the logits ``Z Z^T``.

    Equal to :func:`reconstruction_loss` of ``sigmoid(logits)`` wherever the
    probabilities lie inside ``[eps, 1-eps]``; outside that range the value
    keeps growing and the gradient stays informative instead of vanishing at
    the clamp. Training uses this form.
    """
    if isinstance(targets, DynamicGraph):
        targets = reconstruction_targets(targets)
    logit_seq = list(logit_seq)
    if len(logit_seq) != len(targets):
        raise ValueError(f"{len(logit_seq)} reconstructions for {len(targets)} targets")
    total = None
    count = 0
    for logits, target in zip(logit_seq, targets):
        target = np.asarray(target, dtype=np.float64)
        if target.min() < 0 or target.max() > 1:
            raise TargetError("reconstruction targets must lie in [0, 1]")
        logits = ad.as_tensor(logits)
        ll = ad.mul(target, ad.log_sigmoid(logits)) + ad.mul(1.0 - target, ad.log_sigmoid(-logits))
        term = ad.reduce_sum(ll)
        total = term if total is None else total + term
        count += target.size
    return ad.scale(total, -1.0 / count)


def decode_logits(z) -> Tensor:
    z = ad.as_tensor(z)
    return z @ z.T


def reconstruct(z_seq: list, g: DynamicGraph) -> ReconstructionReport:
    a_hat = [decode(z) for z in z_seq]
    loss = reconstruction_loss(a_hat, g)
    return ReconstructionReport([a.data for a in a_hat], loss.item())
