import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from hashrec import sage as sg
from hashrec.errors import ValidationError
from hashrec.graph import InteractionGraph, Node


def dense_sage_oracle(adjacency, features, weights, activation="relu",
                      aggregator="mean"):
    """Independent dense reimplementation with explicit loops."""
    h = features.copy()
    acts = {"relu": lambda x: np.maximum(x, 0.0), "tanh": np.tanh,
            "identity": lambda x: x}
    aggs = {"mean": np.mean, "max": np.max, "min": np.min, "sum": np.sum}
    for w in weights:
        nxt = np.zeros((h.shape[0], w.shape[0]))
        for n in range(h.shape[0]):
            neigh = adjacency[n]
            if neigh:
                agg = aggs[aggregator](np.stack([h[m] for m in neigh]), axis=0)
            else:
                agg = np.zeros(h.shape[1])
            row = acts[activation](w @ np.concatenate([h[n], agg]))
            norm = np.linalg.norm(row)
            nxt[n] = row / norm if norm > 1e-12 else 0.0
        h = nxt
    return h


def path_graph(n):
    g = InteractionGraph(nodes=[Node("user", str(i)) for i in range(n)])
    for i in range(n - 1):
        g.add_edge(i, i + 1, 1.0)
    return g


def test_mean_aggregate_trivials():
    assert np.array_equal(sg.mean_aggregate([], dim=3), np.zeros(3))
    v = np.array([1.0, 2.0])
    assert np.array_equal(sg.mean_aggregate([v]), v)
    assert np.array_equal(
        sg.mean_aggregate([np.array([0.0, 2.0]), np.array([2.0, 0.0])]),
        np.array([1.0, 1.0]))
    with pytest.raises(ValidationError):
        sg.mean_aggregate([])


def test_isolated_node_identity_with_concat_identity_weights():
    # W = [I | I], identity activation: isolated node maps to its own
    # unit-normalized embedding (aggregate is zero).
    d = 4
    w = torch.cat([torch.eye(d, dtype=torch.float64),
                   torch.eye(d, dtype=torch.float64)], dim=1)
    params = sg.SageParams(layers=[w], activation="identity")
    feats = torch.randn(3, d, dtype=torch.float64,
                        generator=torch.Generator().manual_seed(0))
    out = sg.sage_forward(np.zeros((2, 0), dtype=np.int64), feats, params)
    expected = feats / torch.linalg.norm(feats, dim=1, keepdim=True)
    assert torch.allclose(out, expected, atol=1e-12)


def test_symmetric_nodes_equal_embeddings():
    # nodes 0 and 2 of a 3-path are automorphic with equal features
    g = path_graph(3)
    params = sg.init_sage(1, [4, 4, 4])
    row = torch.randn(4, dtype=torch.float64,
                      generator=torch.Generator().manual_seed(1))
    mid = torch.randn(4, dtype=torch.float64,
                      generator=torch.Generator().manual_seed(2))
    feats = torch.stack([row, mid, row])
    out = sg.sage_forward(g.edge_index(), feats, params)
    assert torch.allclose(out[0], out[2], atol=1e-14)


@pytest.mark.parametrize("aggregator", sg.AGGREGATORS)
@pytest.mark.parametrize("activation", sg.ACTIVATIONS)
def test_path_matches_dense_oracle(aggregator, activation):
    g = path_graph(3)
    params = sg.init_sage(3, [5, 4, 4], activation=activation,
                          aggregator=aggregator)
    gen = torch.Generator().manual_seed(3)
    feats = torch.randn(3, 5, dtype=torch.float64, generator=gen)
    out = sg.sage_forward(g.edge_index(), feats, params)
    expected = dense_sage_oracle(g.adjacency(), feats.numpy(),
                                 [w.numpy() for w in params.layers],
                                 activation, aggregator)
    np.testing.assert_allclose(out.numpy(), expected, atol=1e-10)


def test_random_graphs_match_dense_oracle():
    for seed in range(5):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(4, 9))
        g = InteractionGraph(nodes=[Node("user", str(i)) for i in range(n)])
        for i in range(n):
            for j in range(i + 1, n):
                if rng.random() < 0.4:
                    g.add_edge(i, j, float(rng.random()))
        params = sg.init_sage(seed + 100, [6, 5, 4])
        feats = torch.from_numpy(rng.standard_normal((n, 6)))
        out = sg.sage_forward(g.edge_index(), feats, params)
        expected = dense_sage_oracle(g.adjacency(), feats.numpy(),
                                     [w.numpy() for w in params.layers])
        np.testing.assert_allclose(out.numpy(), expected, atol=1e-10)


def test_rows_unit_norm_or_zero():
    g = path_graph(6)
    params = sg.init_sage(7, [4, 4, 4])
    gen = torch.Generator().manual_seed(7)
    feats = torch.randn(6, 4, dtype=torch.float64, generator=gen)
    out = sg.sage_forward(g.edge_index(), feats, params)
    norms = torch.linalg.norm(out, dim=1)
    for n in norms:
        assert abs(float(n) - 1.0) < 1e-12 or float(n) == 0.0


def test_j_hop_locality():
    # changing a feature > J hops away leaves an embedding bit-identical
    g = path_graph(6)
    params = sg.init_sage(9, [4, 4, 4])  # J = 2
    gen = torch.Generator().manual_seed(9)
    feats = torch.randn(6, 4, dtype=torch.float64, generator=gen)
    base = sg.sage_forward(g.edge_index(), feats, params)
    bumped = feats.clone()
    bumped[5] += 10.0  # node 5 is 5 hops from node 0
    out = sg.sage_forward(g.edge_index(), bumped, params)
    assert torch.equal(out[0], base[0])
    assert not torch.equal(out[5], base[5])


def test_edge_weight_invariance():
    # aggregation reads topology only: reweighting edges changes nothing
    g1, g2 = path_graph(4), path_graph(4)
    for key in list(g2.edges):
        g2.edges[key] = 0.123
    params = sg.init_sage(4, [3, 3])
    gen = torch.Generator().manual_seed(4)
    feats = torch.randn(4, 3, dtype=torch.float64, generator=gen)
    a = sg.sage_forward(g1.edge_index(), feats, params)
    b = sg.sage_forward(g2.edge_index(), feats, params)
    assert torch.equal(a, b)


def test_shape_chain_validation():
    w1 = torch.zeros(4, 6, dtype=torch.float64)
    w2 = torch.zeros(3, 10, dtype=torch.float64)  # expects 2*4 = 8
    with pytest.raises(ValidationError, match="chain"):
        sg.SageParams(layers=[w1, w2])
    with pytest.raises(ValidationError):
        sg.SageParams(layers=[])


def test_feature_width_validation():
    params = sg.init_sage(0, [4, 4])
    with pytest.raises(ValidationError, match="feature width"):
        sg.sage_forward(np.zeros((2, 0), dtype=np.int64),
                        torch.zeros(2, 5, dtype=torch.float64), params)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_tanh_oracle_property(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 7))
    g = InteractionGraph(nodes=[Node("user", str(i)) for i in range(n)])
    for i in range(n - 1):
        g.add_edge(i, int(rng.integers(i + 1, n)), 1.0)
    params = sg.init_sage(int(rng.integers(0, 1000)), [3, 3],
                          activation="tanh")
    feats = torch.from_numpy(rng.standard_normal((n, 3)))
    out = sg.sage_forward(g.edge_index(), feats, params)
    expected = dense_sage_oracle(g.adjacency(), feats.numpy(),
                                 [w.numpy() for w in params.layers], "tanh")
    np.testing.assert_allclose(out.numpy(), expected, atol=1e-10)


def test_gradients_match_finite_differences():
    g = path_graph(4)
    params = sg.init_sage(6, [3, 3, 3], requires_grad=True)
    gen = torch.Generator().manual_seed(6)
    feats = torch.randn(4, 3, dtype=torch.float64, generator=gen)
    probe = torch.randn(4, 3, dtype=torch.float64, generator=gen)

    def scalar_loss():
        return (sg.sage_forward(g.edge_index(), feats, params) * probe).sum()

    scalar_loss().backward()
    step = 1e-6
    for w in params.layers:
        grad = w.grad.reshape(-1)
        flat = w.data.reshape(-1)
        for i in range(flat.numel()):
            orig = float(flat[i])
            with torch.no_grad():
                flat[i] = orig + step
                up = float(scalar_loss())
                flat[i] = orig - step
                down = float(scalar_loss())
                flat[i] = orig
            fd = (up - down) / (2 * step)
            denom = max(abs(fd), abs(float(grad[i])), 1e-8)
            assert abs(fd - float(grad[i])) / denom < 1e-6
