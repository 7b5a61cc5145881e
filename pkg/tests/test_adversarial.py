import json
import math

import numpy as np
import pytest

from atgrl import autodiff as ad
from atgrl.adversarial import (
    EPS,
    DiscriminatorParams,
    PriorError,
    PriorSpec,
    default_means,
    discriminate,
    discriminator_loss,
    generator_loss,
    init_discriminator,
    load_prior_weights,
    mixture_prior,
    sample_prior,
)
from atgrl.autodiff import Tensor

from oracles import gradcheck_max_error


def zero_disc(f=4, hidden=8):
    return init_discriminator(f, hidden, np.random.default_rng(0), zero_output=True)


def test_zero_output_gives_one_half():
    d = zero_disc()
    z = np.random.default_rng(1).normal(size=(10, 4)) * 100
    assert np.array_equal(discriminate(d, z).data, np.full((10, 1), 0.5))


def test_all_zero_parameters_give_one_half():
    d = zero_disc()
    for p in d.parameters():
        p.data = np.zeros(p.shape)
    assert np.all(discriminate(d, np.ones((3, 4))).data == 0.5)


@pytest.mark.parametrize("clamped", [False, True])
def test_losses_at_one_half(clamped):
    d = zero_disc()
    rng = np.random.default_rng(2)
    z, zp = rng.normal(size=(12, 4)), rng.normal(size=(12, 4))
    assert abs(generator_loss(d, z, clamped).item() - math.log(2)) <= 1e-12
    assert abs(discriminator_loss(d, zp, z, clamped).item() - 2 * math.log(2)) <= 1e-12


def test_outputs_are_clamped():
    d = init_discriminator(2, 4, np.random.default_rng(3))
    d.b3.data = np.array([[1e4]])
    out = discriminate(d, np.zeros((2, 2))).data
    assert np.all(out <= 1 - EPS) and np.all(out >= EPS)


def test_discriminator_gradients_match_finite_differences():
    rng = np.random.default_rng(4)
    d = init_discriminator(3, 5, rng)
    for p in (d.b1, d.b2, d.b3):
        p.data = rng.normal(scale=0.3, size=p.shape)
    z = rng.normal(size=(6, 3))
    w = rng.normal(size=(6, 1))

    def build():
        return ad.reduce_sum(ad.mul(w, discriminate(d, z)))

    ad.zero_grad(d.parameters())
    ad.backward(build())
    assert gradcheck_max_error(lambda: build().item(), d.parameters()) < 1e-4


def test_generator_loss_limit():
    d = zero_disc()
    d.b3.data = np.array([[40.0]])
    assert 0 <= generator_loss(d, np.zeros((3, 4))).item() < 1e-12


def test_perfect_discriminator_loss_is_tiny():
    d = zero_disc()
    d.b3.data = np.array([[0.0]])
    d.W3.data = np.zeros_like(d.W3.data)
    d.W1.data = np.zeros_like(d.W1.data)
    d.W1.data[0, 0] = 1.0
    d.W2.data = np.eye(d.hidden)
    d.W3.data[0, 0] = 1e6
    real = np.zeros((5, 4))
    real[:, 0] = 1.0
    fake = np.zeros((5, 4))
    fake[:, 0] = -1.0
    loss = discriminator_loss(d, real, fake, clamped=True).item()
    assert 0 <= loss <= 2 * -math.log(1 - EPS) + 1e-15


def test_generator_loss_does_not_touch_discriminator():
    rng = np.random.default_rng(5)
    d = init_discriminator(3, 4, rng)
    z = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
    ad.zero_grad(d.parameters())
    ad.backward(generator_loss(d, z))
    assert all(np.all(p.grad == 0) for p in d.parameters())
    assert np.any(z.grad != 0)


def test_discriminator_loss_does_not_touch_embeddings():
    rng = np.random.default_rng(6)
    d = init_discriminator(3, 4, rng)
    z = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
    z.zero_grad()
    ad.backward(discriminator_loss(d, rng.normal(size=(4, 3)), z))
    assert np.all(z.grad == 0)
    assert any(np.any(p.grad != 0) for p in d.parameters())


def test_one_small_step_decreases_discriminator_loss():
    rng = np.random.default_rng(7)
    d = init_discriminator(4, 8, rng)
    z, zp = rng.normal(size=(20, 4)), rng.normal(loc=2.0, size=(20, 4))
    before = discriminator_loss(d, zp, z)
    ad.zero_grad(d.parameters())
    ad.backward(before)
    for p in d.parameters():
        p.data = p.data - 1e-4 * p.grad
    assert discriminator_loss(d, zp, z).item() < before.item()


def test_parameter_round_trip():
    d = init_discriminator(4, 6, np.random.default_rng(8))
    back = DiscriminatorParams.from_dict(d.to_dict())
    assert all(np.array_equal(a.data, b.data) for a, b in zip(d.parameters(), back.parameters()))


# ---------------------------------------------------------------------------
# prior
# ---------------------------------------------------------------------------


def test_standard_gaussian_sample_mean():
    spec = PriorSpec(np.zeros((1, 3)), 1.0)
    x = sample_prior(spec, 100_000, 0)
    assert np.all(np.abs(x.mean(axis=0)) < 0.02)


def test_degenerate_weights_pick_one_component():
    spec = PriorSpec(np.array([[10.0, 0.0], [-10.0, 0.0]]), 1.0, np.array([1.0, 0.0]))
    x = sample_prior(spec, 500, 1)
    assert np.all(x[:, 0] > 0)


def test_sampling_is_deterministic():
    spec = mixture_prior(5, 4)
    assert np.array_equal(sample_prior(spec, 50, 3), sample_prior(spec, 50, 3))


def test_default_means_pattern():
    means = default_means(5, 3)
    assert np.array_equal(means, 3 * np.eye(3)[[0, 1, 2, 0, 1]])


def test_prior_histogram_file(tmp_path):
    path = tmp_path / "prior.json"
    path.write_text(json.dumps({"weights": [0.25, 0.75]}))
    assert np.array_equal(load_prior_weights(path), [0.25, 0.75])
    path.write_text(json.dumps({"weights": [0.5, 0.6]}))
    with pytest.raises(PriorError):
        load_prior_weights(path)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(component_means=np.zeros((2, 2)), component_stddev=0.0),
        dict(component_means=np.zeros((2, 2)), component_weights=np.array([0.5, 0.4])),
        dict(component_means=np.zeros((2, 2)), component_weights=np.array([1.0])),
    ],
)
def test_invalid_prior(kwargs):
    with pytest.raises(PriorError):
        PriorSpec(**kwargs)
