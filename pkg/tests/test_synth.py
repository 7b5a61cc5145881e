import math

import numpy as np
import pytest

from atgrl.synth import DynSbmConfig, UndetectableRegimeWarning, generate


def block_counts(adj, labels):
    same = labels[:, None] == labels[None, :]
    iu = np.triu_indices(len(labels), 1)
    within = same[iu]
    edges = adj[iu] > 0
    return edges[within].sum(), within.sum(), edges[~within].sum(), (~within).sum()


def test_no_drift_keeps_labels():
    g = generate(DynSbmConfig(n=30, c=3, t=3, migrate_frac=0.0, seed=4))
    assert all(np.array_equal(g.labels[0], g.labels[t]) for t in range(3))


def test_initial_labels_balanced():
    for seed in range(5):
        g = generate(DynSbmConfig(n=31, c=4, seed=seed))
        sizes = np.bincount(g.labels[0], minlength=4)
        assert sizes.max() - sizes.min() <= 1


def test_block_densities_over_twenty_seeds():
    inside, between = [], []
    for seed in range(20):
        g = generate(DynSbmConfig(n=60, c=3, t=1, p_in=0.4, p_out=0.05, seed=seed))
        e_in, n_in, e_out, n_out = block_counts(g.snapshots[0].adjacency, g.labels[0])
        inside.append(e_in / n_in)
        between.append(e_out / n_out)
    assert abs(np.mean(inside) - 0.4) <= 0.05
    assert abs(np.mean(between) - 0.05) <= 0.02


@pytest.mark.parametrize("seed", range(10))
def test_edge_counts_within_three_sigma(seed):
    cfg = DynSbmConfig(n=60, c=3, t=4, seed=seed)
    g = generate(cfg)
    for t in range(g.t):
        e_in, n_in, e_out, n_out = block_counts(g.snapshots[t].adjacency, g.labels[t])
        for count, pairs, p in ((e_in, n_in, cfg.p_in), (e_out, n_out, cfg.p_out)):
            sd = math.sqrt(pairs * p * (1 - p))
            assert abs(count - pairs * p) <= 3 * sd


def test_same_seed_is_bit_identical():
    a = generate(DynSbmConfig(seed=11, migrate_frac=0.1))
    b = generate(DynSbmConfig(seed=11, migrate_frac=0.1))
    assert np.array_equal(a.labels, b.labels)
    for sa, sb in zip(a.snapshots, b.snapshots):
        assert np.array_equal(sa.adjacency, sb.adjacency)
        assert np.array_equal(sa.features, sb.features)


def test_shapes_and_symmetry():
    g = generate(DynSbmConfig(n=20, c=2, t=3, feature_dim=5, seed=1))
    assert g.labels.shape == (3, 20)
    assert (g.t, g.n, g.d) == (3, 20, 5)
    for s in g.snapshots:
        assert np.array_equal(s.adjacency, s.adjacency.T)
        assert np.all(np.diag(s.adjacency) == 0)
        assert set(np.unique(s.adjacency)) <= {0.0, 1.0}


def test_migration_moves_expected_number_of_nodes():
    g = generate(DynSbmConfig(n=40, c=4, t=3, migrate_frac=0.1, seed=2))
    for t in range(1, 3):
        assert (g.labels[t] != g.labels[t - 1]).sum() == math.ceil(0.1 * 40)


def test_shift_step_reassigns_half():
    g = generate(DynSbmConfig(n=60, c=3, t=4, shift_step=3, seed=3))
    changed = [(g.labels[t] != g.labels[t - 1]).sum() for t in range(1, 4)]
    assert changed == [0, 30, 0]


def test_features_separate_communities():
    g = generate(DynSbmConfig(n=60, c=3, t=1, feature_noise=0.5, seed=5))
    x, lab = g.snapshots[0].features, g.labels[0]
    centres = np.stack([x[lab == k].mean(axis=0) for k in range(3)])
    within = np.mean([np.linalg.norm(x[lab == k] - centres[k], axis=1).mean() for k in range(3)])
    between = min(np.linalg.norm(centres[i] - centres[j]) for i in range(3) for j in range(i + 1, 3))
    assert between > 2 * within


def test_undetectable_regime_warns_but_generates():
    with pytest.warns(UndetectableRegimeWarning):
        cfg = DynSbmConfig(n=12, c=2, t=1, p_in=0.05, p_out=0.4)
    assert generate(cfg).n == 12


@pytest.mark.parametrize(
    "kwargs", [dict(c=0), dict(c=100, n=10), dict(p_in=1.5), dict(migrate_frac=-0.1), dict(shift_step=9)]
)
def test_invalid_config(kwargs):
    with pytest.raises(ValueError):
        DynSbmConfig(**kwargs)
