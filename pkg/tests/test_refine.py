import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mhetgl.graph import AttributedGraph
from mhetgl.graphlets import GdvMatrix, gdv
from mhetgl.injection import inject_structural, sbm_fixture
from mhetgl.refine import (
    augmented_adjacency,
    edge_tags,
    gdv_edge_similarity,
    load_topology,
    refine_topology,
    save_topology,
)


def _graph(n, edges):
    return AttributedGraph.from_edges(n, edges, np.zeros((n, 1)))


def test_two_isolated_edges_uniform_rows():
    g = _graph(4, [(0, 1), (2, 3)])
    a = augmented_adjacency(g, gdv(g)).toarray()
    assert np.allclose(a, 0.25)


def test_no_parallel_gdvs_gives_self_loops():
    g = _graph(5, [(0, 1), (1, 2), (2, 3), (1, 3), (3, 4)])
    counts = np.array([[1, 0, 0, 0], [3, 1, 2, 1], [2, 0, 1, 1], [3, 2, 1, 0], [1, 0, 0, 9]])
    a = augmented_adjacency(g, GdvMatrix(counts, 3)).toarray()
    assert np.array_equal(a, np.eye(5))


def test_weights_follow_degree_sum():
    # star with 3 leaves plus a pendant path; leaves 1..3 share a GDV, node 4 also
    g = _graph(6, [(0, 1), (0, 2), (0, 3), (4, 5)])
    counts = np.array([[3, 0, 3, 0], [1, 2, 0, 0], [1, 2, 0, 0], [1, 2, 0, 0], [1, 0, 0, 0], [1, 0, 0, 0]])
    a, raw = augmented_adjacency(g, GdvMatrix(counts, 3), return_raw=True)
    assert raw[1, 2] == pytest.approx(2) and raw[1, 1] == pytest.approx(2)
    assert raw[4, 5] == pytest.approx(2) and raw[0, 0] == pytest.approx(6)
    assert raw[0, 1] == 0 and raw[1, 4] == 0
    assert a[1].toarray().ravel().tolist() == pytest.approx([0, 1 / 3, 1 / 3, 1 / 3, 0, 0])


def test_isolated_node_keeps_unit_self_loop():
    g = _graph(3, [(0, 1)])
    a = augmented_adjacency(g, gdv(g)).toarray()
    assert a[2].tolist() == [0, 0, 1]


def test_delta_validation():
    g = _graph(2, [(0, 1)])
    with pytest.raises(ValueError):
        augmented_adjacency(g, gdv(g), delta=0.0)


@given(st.integers(0, 10_000), st.sampled_from([0.5, 0.9, 1.0]))
@settings(max_examples=25, deadline=None)
def test_rows_stochastic(seed, delta):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 30))
    g = _graph(n, [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < 0.2])
    topo = refine_topology(g, delta=delta, workers=1)
    for m in (topo.a_pur, topo.a_aug):
        assert np.allclose(np.asarray(m.sum(axis=1)).ravel(), 1.0, atol=1e-9)
        assert np.all(m.data >= 0)
        assert np.all(m.diagonal() > 0)
    assert np.all(topo.a_pur.data > 0)


def test_edge_tags_and_similarity():
    g = _graph(4, [(0, 1), (1, 2), (2, 3)])
    assert edge_tags(g, [1, 1, 0, 0]).tolist() == ["aa", "an", "nn"]
    sim = gdv_edge_similarity(g, gdv(g))
    assert sim[0] == pytest.approx(sim[2]) and np.all(sim <= 1 + 1e-12)


def test_cache_round_trip(tmp_path):
    g = sbm_fixture(0, num_nodes=60)
    topo = refine_topology(g, workers=1)
    save_topology(topo, g, tmp_path)
    back = load_topology(g, tmp_path)
    assert np.array_equal(back.kappa, topo.kappa)
    assert (back.a_pur != topo.a_pur).nnz == 0 and (back.a_aug != topo.a_aug).nnz == 0
    assert np.array_equal(back.gdv.counts, topo.gdv.counts)
    assert (back.raw_pur != topo.raw_pur).nnz == 0


def test_load_missing_cache(tmp_path):
    with pytest.raises(FileNotFoundError, match="preprocess"):
        load_topology(_graph(2, [(0, 1)]), tmp_path)


def test_clique_signal_single_seed():
    g = sbm_fixture(1)
    g, y, _ = inject_structural(g, 10, 2, seed=1)
    topo = refine_topology(g, workers=1)
    tags = edge_tags(g, y)
    assert topo.kappa[tags == "aa"].mean() > topo.kappa[tags == "an"].mean()
    sim = gdv_edge_similarity(g, topo.gdv)
    assert sim[tags == "aa"].mean() > sim[tags == "an"].mean()
