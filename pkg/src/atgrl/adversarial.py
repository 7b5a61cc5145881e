"""Prior-matching discriminator and the generator/discriminator losses."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .encoder import glorot

EPS = 1e-7
LEAK = 0.2
MEAN_SCALE = 3.0


class PriorError(ValueError):
    """Prior parameters or histogram file are invalid."""


@dataclass
class DiscriminatorParams:
    W1: Tensor
    b1: Tensor
    W2: Tensor
    b2: Tensor
    W3: Tensor
    b3: Tensor

    NAMES = ("W1", "b1", "W2", "b2", "W3", "b3")

    def named_tensors(self) -> dict[str, Tensor]:
        return {name: getattr(self, name) for name in self.NAMES}

    def parameters(self) -> list[Tensor]:
        return [getattr(self, name) for name in self.NAMES]

    def frozen(self) -> "DiscriminatorParams":
        """Constant copies: the generator loss must not reach discriminator weights."""
        return DiscriminatorParams(*(p.detach() for p in self.parameters()))

    @property
    def hidden(self) -> int:
        return self.W1.shape[1]

    @property
    def in_dim(self) -> int:
        return self.W1.shape[0]

    def to_dict(self) -> dict:
        return {name: t.data for name, t in self.named_tensors().items()}

    @classmethod
    def from_dict(cls, payload: dict) -> "DiscriminatorParams":
        try:
            arrays = [np.array(payload[name], dtype=np.float64) for name in cls.NAMES]
        except KeyError as exc:
            raise ValueError(f"discriminator checkpoint lacks {exc}") from exc
        return cls(*(Tensor(a, requires_grad=True, name=f"disc.{n}") for a, n in zip(arrays, cls.NAMES)))


def init_discriminator(in_dim: int, hidden: int, rng: np.random.Generator, zero_output: bool = False) -> DiscriminatorParams:
    """Glorot weights, zero biases; ``zero_output`` makes the network output exactly 0.5."""
    shapes = [(in_dim, hidden), (1, hidden), (hidden, hidden), (1, hidden), (hidden, 1), (1, 1)]
    arrays = []
    for name, shape in zip(DiscriminatorParams.NAMES, shapes):
        if name.startswith("b") or (zero_output and name == "W3"):
            arrays.append(np.zeros(shape))
        else:
            arrays.append(glorot(shape, rng))
    return DiscriminatorParams(
        *(Tensor(a, requires_grad=True, name=f"disc.{n}") for a, n in zip(arrays, DiscriminatorParams.NAMES))
    )


def discriminator_logits(params: DiscriminatorParams, z) -> Tensor:
    z = ad.as_tensor(z)
    h = ad.leaky_relu(z @ params.W1 + params.b1, LEAK)
    h = ad.leaky_relu(h @ params.W2 + params.b2, LEAK)
    return h @ params.W3 + params.b3


def discriminate(params: DiscriminatorParams, z) -> Tensor:
    """Per-row probability that ``z`` was drawn from the prior, clamped to ``[eps, 1-eps]``."""
    return ad.clamp(ad.sigmoid(discriminator_logits(params, z)), EPS, 1.0 - EPS)


def _log_d(params: DiscriminatorParams, z, clamped: bool) -> Tensor:
    if clamped:
        return ad.log(discriminate(params, z))
    return ad.log_sigmoid(discriminator_logits(params, z))


def _log_one_minus_d(params: DiscriminatorParams, z, clamped: bool) -> Tensor:
    if clamped:
        return ad.log(1.0 - discriminate(params, z))
    return ad.log_sigmoid(-discriminator_logits(params, z))


def generator_loss(params: DiscriminatorParams, z, clamped: bool = False) -> Tensor:
    """``-mean log D(z)``; discriminator weights enter as constants.

    By default ``log D`` is taken from the logits, which matches the clamped
    form whenever ``D`` lies in ``[eps, 1-eps]`` but keeps a gradient when the
    discriminator saturates. ``clamped=True`` evaluates the clamped form.
    """
    return ad.scale(ad.mean(_log_d(params.frozen(), z, clamped)), -1.0)


def discriminator_loss(params: DiscriminatorParams, z_prior, z, clamped: bool = False) -> Tensor:
    """``-mean log D(z') - mean log(1 - D(z))``; embeddings enter as constants."""
    z = ad.as_tensor(z).detach()
    z_prior = ad.as_tensor(z_prior).detach()
    real = ad.mean(_log_d(params, z_prior, clamped))
    fake = ad.mean(_log_one_minus_d(params, z, clamped))
    return ad.scale(real + fake, -1.0)


# ---------------------------------------------------------------------------
# prior
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PriorSpec:
    component_means: np.ndarray
    component_stddev: float = 1.0
    component_weights: np.ndarray | None = None
    kind: str = "gaussian-mixture"

    def __post_init__(self):
        means = np.atleast_2d(np.asarray(self.component_means, dtype=np.float64))
        if means.shape[0] < 1:
            raise PriorError("a prior needs at least one component")
        if not self.component_stddev > 0:
            raise PriorError("component_stddev must be positive")
        if self.kind != "gaussian-mixture":
            raise PriorError(f"unsupported prior kind {self.kind!r}")
        weights = self.component_weights
        weights = np.full(means.shape[0], 1.0 / means.shape[0]) if weights is None else np.asarray(weights, float)
        if weights.shape != (means.shape[0],):
            raise PriorError(f"{weights.size} weights for {means.shape[0]} components")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-6:
            raise PriorError("component weights must be non-negative and sum to 1")
        object.__setattr__(self, "component_means", means)
        object.__setattr__(self, "component_weights", weights / weights.sum())

    @property
    def components(self) -> int:
        return self.component_means.shape[0]

    @property
    def dim(self) -> int:
        return self.component_means.shape[1]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "component_means": self.component_means,
            "component_stddev": self.component_stddev,
            "component_weights": self.component_weights,
        }


def default_means(components: int, dim: int) -> np.ndarray:
    """``3 * e_(k mod dim)`` for component ``k``."""
    means = np.zeros((components, dim))
    means[np.arange(components), np.arange(components) % dim] = MEAN_SCALE
    return means


def mixture_prior(components: int, dim: int, weights=None, stddev: float = 1.0) -> PriorSpec:
    return PriorSpec(default_means(components, dim), stddev, weights)


def gaussian_prior(dim: int) -> PriorSpec:
    """Single standard Gaussian, as used by the plain adversarial baseline."""
    return PriorSpec(np.zeros((1, dim)), 1.0, None)


def load_prior_weights(path) -> np.ndarray:
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        weights = np.asarray(payload["weights"], dtype=np.float64)
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise PriorError(f"cannot read prior histogram {path}: {exc}") from exc
    if weights.ndim != 1 or weights.size < 1:
        raise PriorError(f"{path}: 'weights' must be a non-empty list")
    if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-6:
        raise PriorError(f"{path}: weights must be non-negative and sum to 1 within 1e-6")
    return weights


def sample_prior(spec: PriorSpec, count: int, rng: np.random.Generator | int) -> np.ndarray:
    rng = np.random.default_rng(rng)
    comp = rng.choice(spec.components, size=count, p=spec.component_weights)
    noise = rng.standard_normal((count, spec.dim))
    return spec.component_means[comp] + spec.component_stddev * noise
