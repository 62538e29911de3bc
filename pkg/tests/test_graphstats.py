import itertools

import numpy as np
import pytest

from rpgraph.features import IGF_NAMES, igf_features, igf_pair_table, igf_table
from rpgraph.graph import SparseGraph
from rpgraph import graphstats

from conftest import random_graph


# --- brute-force oracles -------------------------------------------------

def nbr_sets(g):
    a = g.simple_adjacency().toarray() > 0
    return [set(np.flatnonzero(a[i])) for i in range(len(a))]


def bf_triangles(nb, i):
    return sum(1 for u, v in itertools.combinations(sorted(nb[i]), 2) if v in nb[u])


def bf_core(nb):
    """Largest k whose k-core still contains the node, by repeated peeling."""
    n = len(nb)
    core = [0] * n
    for k in range(1, n):
        alive = set(range(n))
        changed = True
        while changed:
            changed = False
            for v in list(alive):
                if len(nb[v] & alive) < k:
                    alive.discard(v)
                    changed = True
        for v in alive:
            core[v] = k
        if not alive:
            break
    return core


def bf_clique(nb, i):
    members = sorted(nb[i])
    for size in range(len(members), 0, -1):
        for combo in itertools.combinations(members, size):
            if all(v in nb[u] for u, v in itertools.combinations(combo, 2)):
                return size + 1
    return 1


def bf_egonet(nb, i):
    ego = nb[i] | {i}
    internal = sum(1 for u, v in itertools.combinations(sorted(ego), 2) if v in nb[u])
    boundary = sum(1 for u in ego for v in nb[u] if v not in ego)
    return internal, boundary


def dense_pagerank(g, damping=0.85):
    """Solve the PageRank linear system directly."""
    a = g.adj.toarray()
    n = len(a)
    out = a.sum(axis=1)
    p = np.zeros_like(a)
    p[out > 0] = a[out > 0] / out[out > 0, None]
    p[out == 0] = 1.0 / n
    m = np.eye(n) - damping * p.T
    return np.linalg.solve(m, np.full(n, (1 - damping) / n))


def check_graph(g):
    nb = nbr_sets(g)
    table = igf_table(g)
    pr = dense_pagerank(g)
    core = bf_core(nb)
    for i in range(g.node_count):
        row = dict(zip(IGF_NAMES, table.values[i]))
        assert row["degree"] == len(nb[i])
        assert abs(row["pagerank"] - pr[i]) <= 1e-9
        assert row["triangles"] == bf_triangles(nb, i)
        assert row["core_number"] == core[i]
        assert row["max_clique"] == bf_clique(nb, i)
        assert (row["egonet_edges"], row["egonet_boundary"]) == bf_egonet(nb, i)


def test_k4(k4):
    for i in range(4):
        np.testing.assert_allclose(igf_features(k4, i), [3, 0.25, 3, 3, 4, 6, 0])


def test_c5(c5):
    for i in range(5):
        np.testing.assert_allclose(igf_features(c5, i), [2, 0.2, 0, 2, 2, 2, 2])


@pytest.mark.parametrize("seed", range(15))
def test_brute_force_random(seed):
    rng = np.random.default_rng(seed)
    g = random_graph(int(rng.integers(5, 31)), float(rng.uniform(0.05, 0.4)), seed,
                     weighted=bool(seed % 2))
    check_graph(g)


def test_isolated_and_dangling():
    g = SparseGraph.from_edges(5, [0, 1], [1, 2])
    check_graph(g)
    assert igf_features(g, 4)[4] == 1


def test_directed_rejected():
    g = SparseGraph.from_edges(3, [0], [1], directed=True)
    with pytest.raises(ValueError):
        igf_table(g)


def test_clique_cap_fallback(k4):
    size, exact = graphstats.max_clique_containing(k4, 0, cap=2)
    assert not exact and size == 4
    table = igf_table(k4, clique_cap=2)
    assert table.flags == [0, 1, 2, 3]


def test_clique_dense_graph():
    # complete graph on 12 nodes minus a perfect matching: clique number 6
    n = 12
    iu = np.triu_indices(n, 1)
    keep = ~((iu[0] % 2 == 0) & (iu[1] == iu[0] + 1))
    g = SparseGraph.from_edges(n, iu[0][keep], iu[1][keep])
    assert graphstats.max_clique_containing(g, 0) == (6, True)


def test_pair_table():
    g = random_graph(15, 0.3, 1)
    t = igf_pair_table(g, [[0, 3], [3, 0]])
    assert len(t.schema) == 14
    np.testing.assert_array_equal(t.values[0, :7], t.values[1, 7:])
