import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from atgrl import autodiff as ad
from atgrl.autodiff import Tensor
from atgrl.modularity import (
    DegenerateGraphError,
    harden,
    measurable_modularity_loss,
    modularity_context,
    modularity_q,
    modularity_term,
    one_hot,
    size_regularizer,
    soft_assign,
)

from oracles import (
    brute_modularity,
    gradcheck_max_error,
    random_binary_graph,
    two_disjoint_edges,
    two_triangles_with_bridge,
)


def test_context_of_two_disjoint_edges():
    adj, _ = two_disjoint_edges()
    ctx = modularity_context(adj)
    assert ctx.two_m == 4
    assert np.array_equal(ctx.degrees, np.ones(4))
    assert abs(ctx.b.sum()) <= 1e-12


def test_context_matches_elementwise_definition():
    adj = random_binary_graph(np.random.default_rng(0), 7)
    ctx = modularity_context(adj)
    k = adj.sum(axis=1)
    two_m = adj.sum()
    for i in range(7):
        for j in range(7):
            assert ctx.b[i, j] == pytest.approx(adj[i, j] - k[i] * k[j] / two_m, abs=1e-15)


def test_edgeless_graph_rejected():
    with pytest.raises(DegenerateGraphError):
        modularity_context(np.zeros((3, 3)))


def test_fixed_modularity_values():
    adj, labels = two_disjoint_edges()
    assert modularity_q(modularity_context(adj), labels) == 0.5
    assert modularity_q(modularity_context(adj), [0, 0, 0, 0]) == 0.0
    adj, labels = two_triangles_with_bridge()
    assert modularity_q(modularity_context(adj), labels) == pytest.approx(5 / 14, abs=1e-15)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 100_000), n=st.integers(2, 8))
def test_q_matches_oracle_and_is_bounded(seed, n):
    rng = np.random.default_rng(seed)
    adj = random_binary_graph(rng, n)
    labels = rng.integers(0, 3, size=n)
    q = modularity_q(modularity_context(adj), labels)
    assert abs(q - brute_modularity(adj, labels)) <= 1e-12
    assert -1 <= q <= 1


def test_q_permutation_invariant():
    rng = np.random.default_rng(1)
    adj = random_binary_graph(rng, 8)
    labels = rng.integers(0, 3, size=8)
    perm = rng.permutation(8)
    a = modularity_q(modularity_context(adj), labels)
    b = modularity_q(modularity_context(adj[np.ix_(perm, perm)]), labels[perm])
    assert a == pytest.approx(b, abs=1e-14)


# ---------------------------------------------------------------------------
# soft assignment
# ---------------------------------------------------------------------------


def test_zero_logits_give_uniform_assignment():
    p = soft_assign(np.zeros((5, 4))).data
    assert np.all(p == 0.25)


def test_assignment_rows_are_stochastic():
    rng = np.random.default_rng(2)
    p = soft_assign(rng.normal(size=(9, 4)) * 5, Tensor(rng.normal(size=(4, 3)))).data
    assert p.shape == (9, 3)
    assert np.all(np.abs(p.sum(axis=1) - 1) <= 1e-12)
    assert np.all((p >= 0) & (p <= 1))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 100_000), shift=st.floats(-50, 50))
def test_argmax_invariant_to_row_shift(seed, shift):
    rng = np.random.default_rng(seed)
    z = rng.normal(size=(6, 4))
    offsets = shift * rng.random((6, 1))
    assert np.array_equal(harden(soft_assign(z)), harden(soft_assign(z + offsets)))


def test_harden_breaks_ties_to_lowest_index():
    assert np.array_equal(harden(np.full((2, 3), 1 / 3)), [0, 0])


def test_harden_of_one_hot_is_identity():
    labels = np.array([2, 0, 1, 1, 0])
    assert np.array_equal(harden(one_hot(labels, 3)), labels)


# ---------------------------------------------------------------------------
# measurable modularity loss
# ---------------------------------------------------------------------------


def test_loss_on_true_partition_of_two_edges():
    adj, labels = two_disjoint_edges()
    ctx = modularity_context(adj)
    p = one_hot(labels, 2)
    assert modularity_term(ctx, p).item() == -0.5
    assert size_regularizer(p).item() == 0.0
    assert measurable_modularity_loss(ctx, p, lam=0.5).item() == -0.5


def test_uniform_assignment_has_zero_loss():
    adj = random_binary_graph(np.random.default_rng(3), 8)
    p = np.full((8, 4), 0.25)
    assert abs(measurable_modularity_loss(modularity_context(adj), p).item()) <= 1e-15


def test_literal_regularizer_uses_raw_column_sums():
    p = one_hot([0, 0, 1, 1], 2)
    assert size_regularizer(p, normalized=False).item() == pytest.approx(2 * (2 - 0.5) ** 2)


def test_one_hot_identity_on_weighted_sums():
    rng = np.random.default_rng(4)
    for _ in range(10):
        adj = random_binary_graph(rng, 7)
        labels = rng.integers(0, 3, size=7)
        ctx = modularity_context(adj)
        assert abs(-modularity_term(ctx, one_hot(labels, 3)).item() - modularity_q(ctx, labels)) <= 1e-12


def test_loss_averages_over_snapshots():
    rng = np.random.default_rng(5)
    ctxs = [modularity_context(random_binary_graph(rng, 6)) for _ in range(3)]
    p = rng.dirichlet(np.ones(3), size=6)
    each = [measurable_modularity_loss(c, p, lam=0.0).item() for c in ctxs]
    assert measurable_modularity_loss(ctxs, p, lam=0.0).item() == pytest.approx(np.mean(each), rel=1e-14)
    per = measurable_modularity_loss(ctxs, [p, p, p], lam=0.3).item()
    assert per == pytest.approx(measurable_modularity_loss(ctxs, p, lam=0.3).item(), rel=1e-14)


def test_gradient_wrt_logits():
    rng = np.random.default_rng(6)
    ctxs = [modularity_context(random_binary_graph(rng, 6)) for _ in range(2)]
    logits = Tensor(rng.normal(size=(6, 3)), requires_grad=True)
    for normalized in (True, False):

        def build():
            return measurable_modularity_loss(ctxs, soft_assign(logits), lam=0.5, normalized_reg=normalized)

        logits.zero_grad()
        ad.backward(build())
        assert gradcheck_max_error(lambda: build().item(), [logits]) < 1e-5


def test_small_gradient_step_decreases_loss():
    rng = np.random.default_rng(7)
    ctx = modularity_context(random_binary_graph(rng, 8))
    logits = Tensor(rng.normal(size=(8, 3)), requires_grad=True)
    loss = measurable_modularity_loss(ctx, soft_assign(logits))
    ad.backward(loss)
    step = 1.0
    while step > 1e-8:
        trial = measurable_modularity_loss(ctx, soft_assign(logits.data - step * logits.grad)).item()
        if trial < loss.item():
            break
        step /= 2
    assert trial < loss.item()


def test_trace_term_permutation_invariant():
    rng = np.random.default_rng(8)
    adj = random_binary_graph(rng, 7)
    p = rng.dirichlet(np.ones(3), size=7)
    perm = rng.permutation(7)
    a = modularity_term(modularity_context(adj), p).item()
    b = modularity_term(modularity_context(adj[np.ix_(perm, perm)]), p[perm]).item()
    assert a == pytest.approx(b, abs=1e-14)


def test_negative_lambda_rejected():
    adj, _ = two_disjoint_edges()
    with pytest.raises(ValueError):
        measurable_modularity_loss(modularity_context(adj), np.full((4, 2), 0.5), lam=-0.1)
