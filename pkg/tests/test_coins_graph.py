import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anngraph.coins import coin_block, coin_flip, coin_row
from anngraph.geometry import CapSpec, DensityParams, cap_volume_exact
from anngraph.graph import (
    Dataset,
    EdgeModel,
    ModelError,
    NeighborGraph,
    build_graph,
    degree_stats,
    edge_probability,
    generate_dataset,
    neighbors,
    parse_model,
)

MASK = (1 << 64) - 1


def _ref_mix(z):
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return z ^ (z >> 31)


def _ref_coin(seed, i, j):
    # plain-integer restatement of the vectorized mixer
    key = _ref_mix((seed + 0x9E3779B97F4A7C15 * (i + 1)) & MASK)
    tgt = _ref_mix((j * 0x9E3779B97F4A7C15 + 0xD1B54A32D192ED03) & MASK)
    return (_ref_mix(key ^ tgt) >> 11) * 2.0**-53


# ---------------------------------------------------------------- coins

def test_coin_matches_integer_reference():
    for seed, i, j in [(0, 0, 1), (7, 3, 2), (2**63 + 5, 1000, 17), (MASK, 12, 99999)]:
        assert coin_flip(seed, i, j) == _ref_coin(seed, i, j)


def test_coin_determinism_and_direction():
    assert coin_flip(42, 1, 2) == coin_flip(42, 1, 2)
    assert coin_flip(42, 1, 2) != coin_flip(42, 2, 1)
    assert coin_flip(42, 1, 2) != coin_flip(43, 1, 2)


def test_coin_self_pair_rejected():
    with pytest.raises(ValueError):
        coin_flip(1, 3, 3)
    with pytest.raises(ValueError):
        coin_flip(1, -1, 3)


def test_coin_block_rows_equal_coin_row():
    rows = np.array([0, 5, 9, 130])
    block = coin_block(11, rows, np.arange(200))
    for r, i in enumerate(rows):
        assert np.array_equal(block[r], coin_row(11, int(i), np.arange(200)))


def test_coins_are_uniform():
    c = coin_block(2024, np.arange(317), np.arange(317))
    off = c[~np.eye(317, dtype=bool)][:100_000]
    assert off.size == 100_000
    assert abs(off.mean() - 0.5) < 0.005
    assert 0.0 <= off.min() and off.max() < 1.0
    hist, _ = np.histogram(off, bins=10, range=(0, 1))
    # 4-sd band around 10^4 per decile
    assert np.all(np.abs(hist - 10_000) < 4 * math.sqrt(10_000 * 0.9))


def test_coins_of_reversed_pairs_are_uncorrelated():
    c = coin_block(5, np.arange(400), np.arange(400))
    iu = np.triu_indices(400, 1)
    corr = np.corrcoef(c[iu], c.T[iu])[0, 1]
    # ~80k pairs: sd of a null correlation is about 0.0035
    assert abs(corr) < 0.02


# ---------------------------------------------------------------- models

def test_edge_probability_examples():
    alpha = 0.6
    theta_on = math.acos(alpha)
    assert edge_probability(EdgeModel.uniform(2.0, 0.3), theta_on, alpha) == 0.3
    assert edge_probability(EdgeModel.exact(2.0), math.acos(0.5), alpha) == 0.0
    assert edge_probability(EdgeModel.exact(2.0), math.acos(0.7), alpha) == 1.0
    assert edge_probability(EdgeModel.adaptive(2.0), 1e-9, alpha) == pytest.approx(1.0, abs=1e-8)
    assert edge_probability(EdgeModel.adaptive(2.0), 1e-9, alpha) < 1.0
    assert edge_probability(EdgeModel.adaptive(2.0), 0.5, alpha) == pytest.approx(1 - 0.5 / math.pi)
    assert edge_probability(EdgeModel.twosided(2.0, 0.8, 0.1), math.acos(0.2), alpha) == 0.1
    assert edge_probability(EdgeModel.twosided(2.0, 0.8, 0.1), 0.1, alpha) == 0.8


def test_edge_probability_rejects_bad_angle():
    with pytest.raises(ValueError):
        edge_probability(EdgeModel.exact(2.0), 4.0, 0.5)


def test_model_validation():
    with pytest.raises(ModelError):
        EdgeModel.uniform(2.0, 1.5)
    with pytest.raises(ModelError):
        EdgeModel.exact(1.0)
    with pytest.raises(ModelError, match="delta1 > delta2"):
        EdgeModel.twosided(2.0, 0.3, 0.5)
    with pytest.raises(ModelError):
        EdgeModel("uniform", 2.0)


def test_parse_model():
    assert parse_model("exact", 2.0) == EdgeModel.exact(2.0)
    assert parse_model("uniform:0.25", 2.0) == EdgeModel.uniform(2.0, 0.25)
    assert parse_model("adaptive", 3.0, saturate=True) == EdgeModel.adaptive(3.0, saturate=True)
    assert parse_model("twosided:0.8,0.1", 2.0) == EdgeModel.twosided(2.0, 0.8, 0.1)
    for bad in ("uniform", "uniform:x", "exact:1", "twosided:0.5", "hnsw"):
        with pytest.raises(ModelError, match="expected exact"):
            parse_model(bad, 2.0)


def test_threshold_saturation():
    m = EdgeModel.exact(4.0)
    with pytest.raises(ValueError):
        m.threshold(1.0)
    assert EdgeModel.exact(4.0, saturate=True).threshold(1.0) == 0.0


# ---------------------------------------------------------------- construction

def _dataset(points):
    points = np.asarray(points, dtype=np.float64)
    n, d = points.shape
    return Dataset(points, DensityParams(n, d, allow_boundary=True))


def test_three_clique():
    # three points within 0.1 rad plus an antipode; n = 4, d = 2 gives omega = 1, alpha_tau(1.2) = 0.8
    pts = [[math.cos(a), math.sin(a)] for a in (0.0, 0.05, 0.1, math.pi)]
    data = _dataset(pts)
    g = build_graph(data, EdgeModel.exact(1.2), seed=0)
    assert g.edge_count == 6
    assert neighbors(g, 0).tolist() == [1, 2]
    assert neighbors(g, 1).tolist() == [0, 2]
    assert neighbors(g, 3).tolist() == []


def test_dataset_validation():
    with pytest.raises(ValueError, match="unit vectors"):
        _dataset([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.0, -1.0]])
    with pytest.raises(ValueError, match="shape"):
        Dataset(np.zeros((3, 2)), DensityParams(4, 2, allow_boundary=True))


@pytest.fixture(scope="module")
def mid():
    return generate_dataset(512, 9, seed=1, allow_boundary=True)


def test_uniform_zero_has_no_edges_and_one_equals_exact(mid):
    assert build_graph(mid, EdgeModel.uniform(2.0, 0.0), 3).edge_count == 0
    exact = build_graph(mid, EdgeModel.exact(2.0), 3)
    full = build_graph(mid, EdgeModel.uniform(2.0, 1.0), 3)
    assert np.array_equal(exact.offsets, full.offsets)
    assert np.array_equal(exact.indices, full.indices)


def test_exact_neighbors_match_brute_force_scan(mid):
    g = build_graph(mid, EdgeModel.uniform(2.0, 1.0), 9)
    alpha = EdgeModel.exact(2.0).threshold(mid.omega)
    pts = mid.points
    for p in range(0, 512, 37):
        dots = [float(np.dot(pts[p], pts[j])) for j in range(512)]
        expect = [j for j in range(512) if j != p and dots[j] >= alpha]
        assert neighbors(g, p).tolist() == expect


def test_build_rule_matches_per_pair_coins():
    data = generate_dataset(40, 3, seed=4)
    model = EdgeModel.twosided(1.5, 0.7, 0.2)
    g = build_graph(data, model, 77)
    alpha = model.threshold(data.omega)
    adj = g.adjacency()
    for i in range(40):
        for j in range(40):
            if i == j:
                continue
            theta = math.acos(max(-1.0, min(1.0, float(np.dot(data.points[i], data.points[j])))))
            keep = coin_flip(77, i, j) < edge_probability(model, theta, alpha)
            assert (j in adj[i]) == keep


def test_subgraph_property_across_delta(mid):
    exact = set(zip(*_edges(build_graph(mid, EdgeModel.exact(2.0), 5))))
    prev = set()
    for delta in (0.1, 0.3, 0.6, 0.9):
        cur = set(zip(*_edges(build_graph(mid, EdgeModel.uniform(2.0, delta), 5))))
        assert prev <= cur <= exact
        prev = cur


def _edges(g: NeighborGraph):
    src = np.repeat(np.arange(g.n), g.degrees())
    return src, g.indices


def test_retention_rate_within_binomial_band(mid):
    exact = build_graph(mid, EdgeModel.exact(2.0), 8).edge_count
    assert exact >= 1000
    for delta in (0.25, 0.5, 0.9):
        kept = build_graph(mid, EdgeModel.uniform(2.0, delta), 8).edge_count
        sd = math.sqrt(delta * (1 - delta) / exact)
        assert abs(kept / exact - delta) <= 4 * sd


def test_uniform_degree_concentration(mid):
    # expected degree (n-1) * delta * Vol_c(alpha_tau), alpha_tau = 0 at tau = 2, omega = 1
    vol = cap_volume_exact(CapSpec(0.0, 9))
    assert vol == 0.5
    g = build_graph(mid, EdgeModel.uniform(2.0, 0.5), 12)
    n = 512
    b = 0.5 * vol
    mu = n * (n - 1) * b
    assert abs(g.edge_count - mu) <= 4 * math.sqrt(n * (n - 1) * b * (1 - b))
    # Chebyshev band for the edge count
    assert mu / 2 <= g.edge_count <= 1.5 * mu


def test_build_is_thread_invariant(mid):
    m = EdgeModel.adaptive(2.0)
    g1 = build_graph(mid, m, 99, threads=1)
    g4 = build_graph(mid, m, 99, threads=4)
    assert g1 == g4
    assert build_graph(mid, m, 99) == g1


def test_structure_invariants(mid):
    for model in (EdgeModel.exact(2.0), EdgeModel.twosided(2.0, 0.9, 0.05), EdgeModel.adaptive(2.0)):
        g = build_graph(mid, model, 1)
        g.check_structure()
        assert g.edge_count == int(g.degrees().sum())
        assert not g.indices.flags.writeable


@settings(max_examples=25, deadline=None)
@given(
    n=st.integers(4, 60),
    d=st.integers(2, 4),
    seed=st.integers(0, 2**64 - 1),
    data_seed=st.integers(0, 2**32 - 1),
    delta=st.floats(0.0, 1.0),
)
def test_graph_properties(n, d, seed, data_seed, delta):
    if math.log2(n) / d < 1:
        n = 2**d
    data = generate_dataset(n, d, data_seed, allow_boundary=True)
    tau = 1.5
    exact = build_graph(data, EdgeModel.exact(tau), seed)
    uni = build_graph(data, EdgeModel.uniform(tau, delta), seed)
    uni.check_structure()
    ex_adj, un_adj = exact.adjacency(), uni.adjacency()
    for p in range(n):
        assert set(un_adj[p]) <= set(ex_adj[p])


def test_neighbors_out_of_range(mid):
    g = build_graph(mid, EdgeModel.uniform(2.0, 0.1), 1)
    with pytest.raises(IndexError):
        neighbors(g, 512)
    with pytest.raises(IndexError):
        neighbors(g, -1)


def test_degree_stats_examples():
    pts = [[math.cos(a), math.sin(a)] for a in (0.0, 0.05, 0.1, 0.15)]
    data = _dataset(pts)
    empty = build_graph(data, EdgeModel.uniform(1.2, 0.0), 0)
    assert degree_stats(empty).mean == 0.0
    full = build_graph(data, EdgeModel.exact(1.2), 0)
    st_ = degree_stats(full)
    assert st_ == (3.0, 3, 3, 0.0, 12)
