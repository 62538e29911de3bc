import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rpgraph.graph import (EdgeListError, SparseGraph, bipartite_square, load_edge_list,
                           load_labels, split_nodes, transition_matrix, write_id_map)

from conftest import dense_transition, random_graph, write_lines


def test_duplicate_edges_merge(tmp_path):
    f = write_lines(tmp_path / "e.tsv", ["0\t1", "1\t2", "0\t1"])
    g = load_edge_list(f, weighted=True)
    assert g.node_count == 3
    assert g.edge_count == 2
    assert g.adj[0, 1] == 2.0 and g.adj[1, 0] == 2.0


def test_empty_file(tmp_path):
    g = load_edge_list(write_lines(tmp_path / "e.tsv", []))
    assert g.node_count == 0 and g.edge_count == 0


def test_negative_weight_names_line(tmp_path):
    f = write_lines(tmp_path / "e.tsv", ["0 1 -2.0"])
    with pytest.raises(EdgeListError) as err:
        load_edge_list(f)
    assert err.value.lineno == 1
    assert "line 1" in str(err.value)


def test_malformed_line(tmp_path):
    f = write_lines(tmp_path / "e.tsv", ["# header", "0 1", "3"])
    with pytest.raises(EdgeListError, match="line 3"):
        load_edge_list(f)


def test_comments_and_string_ids(tmp_path):
    f = write_lines(tmp_path / "e.tsv", ["# c", "bob\talice", "", "alice carol"])
    g = load_edge_list(f)
    assert g.ids == ("bob", "alice", "carol")
    assert g.edge_count == 2
    write_id_map(tmp_path / "ids.tsv", g)
    assert (tmp_path / "ids.tsv").read_text() == "0\tbob\n1\talice\n2\tcarol\n"


def test_bipartite_conflict(tmp_path):
    f = write_lines(tmp_path / "e.tsv", ["b1 u1", "b2 u1", "u1 b3"])
    with pytest.raises(EdgeListError, match="line 3"):
        load_edge_list(f, bipartite=True)


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_edge_list(tmp_path / "nope.tsv")


def test_undirected_symmetry():
    g = random_graph(30, 0.2, 1, weighted=True)
    a = g.adj.toarray()
    np.testing.assert_array_equal(a, a.T)


def test_symmetrization_idempotent():
    g = random_graph(20, 0.3, 2, weighted=True)
    coo = g.adj.tocoo()
    again = SparseGraph.from_edges(g.node_count, coo.row, coo.col, coo.data, directed=True)
    np.testing.assert_array_equal(again.adj.toarray(), g.adj.toarray())


def test_transition_k3(k3):
    t = transition_matrix(k3).dense()
    np.testing.assert_array_equal(t, (np.ones((3, 3)) - np.eye(3)) / 2)


def test_transition_path(path3):
    t = transition_matrix(path3).dense()
    np.testing.assert_array_equal(t[1], [0.5, 0, 0.5])
    np.testing.assert_array_equal(t[0], [0, 1, 0])


def test_isolated_node_self_loop():
    g = SparseGraph.from_edges(6, [0, 1], [1, 2])
    t = transition_matrix(g).matrix
    row = t.getrow(5)
    assert row.indices.tolist() == [5] and row.data.tolist() == [1.0]


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 40), st.floats(0.0, 1.0), st.integers(0, 2**31), st.booleans())
def test_row_stochastic(n, p, seed, weighted):
    g = random_graph(n, p, seed, weighted)
    t = transition_matrix(g).matrix
    assert t.data.min(initial=0) >= 0 and t.data.max(initial=0) <= 1
    np.testing.assert_allclose(np.asarray(t.sum(axis=1)).ravel(), 1.0, atol=1e-9)
    np.testing.assert_allclose(t.toarray(), dense_transition(g), atol=1e-15)


def _bipartite(edges, sides):
    src = [a for a, _ in edges]
    dst = [b for _, b in edges]
    return SparseGraph.from_edges(len(sides), src, dst, partition=sides)


def test_bipartite_star():
    # businesses 0, 1 ; user 2
    g = _bipartite([(0, 2), (1, 2)], [0, 0, 1])
    t = bipartite_square(g, 0)
    np.testing.assert_array_equal(t.dense(), [[0.5, 0.5], [0.5, 0.5]])
    assert t.nodes.tolist() == [0, 1]


def test_bipartite_disconnected_pairs():
    g = _bipartite([(0, 2), (1, 3)], [0, 0, 1, 1])
    np.testing.assert_array_equal(bipartite_square(g, 0).dense(), np.eye(2))


def test_bipartite_requires_partition(k3):
    with pytest.raises(ValueError, match="partition"):
        bipartite_square(k3, 0)


def test_bipartite_intra_edge_rejected():
    with pytest.raises(ValueError):
        _bipartite([(0, 1)], [0, 0])


def _rect_stochastic(w):
    s = w.sum(axis=1, keepdims=True)
    return np.divide(w, s, out=np.zeros_like(w), where=s > 0)


@pytest.mark.parametrize("seed", range(10))
def test_bipartite_matches_dense_product(seed):
    rng = np.random.default_rng(seed)
    nb, nu = rng.integers(2, 25), rng.integers(2, 25)
    w = (rng.random((nb, nu)) < 0.3) * rng.uniform(0.5, 3.0, (nb, nu))
    rows, cols = np.nonzero(w)
    g = SparseGraph.from_edges(nb + nu, rows, cols + nb, w[rows, cols],
                               partition=[0] * nb + [1] * nu)
    for side, block in ((0, w), (1, w.T)):
        expected = _rect_stochastic(block) @ _rect_stochastic(block.T)
        empty = expected.sum(axis=1) == 0
        expected[empty, empty] = 1.0
        got = bipartite_square(g, side).dense()
        assert np.abs(got - expected).max() <= 1e-12


def test_bipartite_mixed_degrees():
    # three businesses, two users
    w = np.array([[1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    rows, cols = np.nonzero(w)
    g = SparseGraph.from_edges(5, rows, cols + 3, partition=[0, 0, 0, 1, 1])
    expected = _rect_stochastic(w) @ _rect_stochastic(w.T)
    np.testing.assert_allclose(bipartite_square(g, 0).dense(), expected, atol=1e-12)
    np.testing.assert_allclose(expected[1], [0.25, 0.5, 0.25])


def test_split_deterministic_and_partitioned():
    g = random_graph(100, 0.05, 3)
    a1, b1, s1 = split_nodes(g, 0.5, seed=7)
    a2, b2, s2 = split_nodes(g, 0.5, seed=7)
    assert a1.node_count + b1.node_count == 100
    np.testing.assert_array_equal(s1.graph_a_nodes, s2.graph_a_nodes)
    assert (a1.adj != a2.adj).nnz == 0 and (b1.adj != b2.adj).nnz == 0
    assert not set(s1.graph_a_nodes) & set(s1.graph_b_nodes)
    assert set(s1.graph_a_nodes) | set(s1.graph_b_nodes) == set(range(100))


def test_split_edge_accounting():
    g = random_graph(60, 0.1, 4)
    a, b, s = split_nodes(g, 0.4, seed=1)
    in_a = np.zeros(60, bool)
    in_a[s.graph_a_nodes] = True
    coo = g.adj.tocoo()
    upper = coo.row < coo.col
    cross = int((in_a[coo.row[upper]] != in_a[coo.col[upper]]).sum())
    assert a.edge_count + b.edge_count + cross == g.edge_count
    # no retained edge crosses: every kept edge maps back to a same-part edge
    for part, nodes in ((a, s.graph_a_nodes), (b, s.graph_b_nodes)):
        sub = part.adj.tocoo()
        assert np.all(g.adj[nodes[sub.row], nodes[sub.col]] > 0)


def test_split_k4():
    iu = np.triu_indices(4, 1)
    g = SparseGraph.from_edges(4, *iu)
    a, b, _ = split_nodes(g, 0.5, seed=0)
    assert a.edge_count == 1 and b.edge_count == 1


def test_split_bad_fraction(k3):
    with pytest.raises(ValueError):
        split_nodes(k3, 1.0)


def test_labels_roundtrip(tmp_path):
    f = write_lines(tmp_path / "e.tsv", ["x y", "y z"])
    g = load_edge_list(f)
    lab = write_lines(tmp_path / "l.tsv", ["z\tb", "x\ta"])
    labels, classes = load_labels(lab, g)
    assert classes == ["a", "b"]
    assert labels.tolist() == [0, -1, 1]
