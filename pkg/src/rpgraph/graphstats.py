"""Isomorphism-invariant node statistics for undirected graphs."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .graph import SparseGraph

__all__ = [
    "pagerank",
    "triangle_counts",
    "core_numbers",
    "max_clique_containing",
    "egonet_edge_counts",
]


def pagerank(g: SparseGraph, damping=0.85, tol=1e-10, max_iter=10_000):
    """Power-iteration PageRank with uniform teleport.

    Edge weights bias the walk.  Dangling nodes jump uniformly.  Iterates
    until the L1 change drops below ``tol``.
    """
    n = g.node_count
    if n == 0:
        return np.zeros(0)
    adj = g.adj.copy()
    out_w = np.asarray(adj.sum(axis=1)).ravel()
    dangling = out_w == 0
    inv = np.divide(1.0, out_w, out=np.zeros(n), where=~dangling)
    walk_t = sp.csr_matrix((sp.diags(inv) @ adj).T)
    x = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        nxt = damping * (walk_t @ x)
        nxt += (damping * x[dangling].sum() + (1.0 - damping)) / n
        err = np.abs(nxt - x).sum()
        x = nxt
        if err < tol:
            break
    return x


def triangle_counts(g: SparseGraph):
    """Triangles through each node: ``diag(A^3) / 2`` on the simple graph."""
    a = g.simple_adjacency()
    paths2 = a @ a
    return np.asarray(paths2.multiply(a).sum(axis=1)).ravel().round().astype(np.int64) // 2


def core_numbers(g: SparseGraph):
    """k-core number per node (Batagelj-Zaversnik bucket peeling)."""
    a = g.simple_adjacency()
    n = a.shape[0]
    deg = np.diff(a.indptr).astype(np.int64)
    if n == 0:
        return deg
    order = np.argsort(deg, kind="stable")
    pos = np.empty(n, dtype=np.int64)
    pos[order] = np.arange(n)
    bin_start = np.zeros(int(deg.max()) + 2, dtype=np.int64)
    np.add.at(bin_start, deg + 1, 1)
    bin_start = np.cumsum(bin_start).tolist()
    order, pos, deg = order.tolist(), pos.tolist(), deg.tolist()
    indptr, indices = a.indptr.tolist(), a.indices.tolist()
    for idx in range(n):
        v = order[idx]
        for u in indices[indptr[v]:indptr[v + 1]]:
            if deg[u] > deg[v]:
                du = deg[u]
                pu = pos[u]
                pw = bin_start[du]
                w = order[pw]
                if u != w:
                    order[pu], order[pw] = w, u
                    pos[u], pos[w] = pw, pu
                bin_start[du] += 1
                deg[u] -= 1
    return np.array(deg, dtype=np.int64)


def _max_clique_size(adjbits, candidates):
    """Exact clique number of the subgraph on bitmask ``candidates``.

    Branch and bound with a greedy coloring bound; ``adjbits[v]`` is the
    neighbor bitmask of local vertex v.
    """
    best = 0

    def color_bound(cand):
        # greedy coloring in index order; returns vertices with their colors
        order, colors = [], []
        color = 0
        uncolored = cand
        while uncolored:
            color += 1
            avail = uncolored
            while avail:
                low = avail & -avail
                v = low.bit_length() - 1
                avail &= ~low
                avail &= ~adjbits[v]
                uncolored &= ~low
                order.append(v)
                colors.append(color)
        return order, colors

    def expand(size, cand):
        nonlocal best
        order, colors = color_bound(cand)
        for k in range(len(order) - 1, -1, -1):
            if size + colors[k] <= best:
                return
            v = order[k]
            bit = 1 << v
            new = cand & adjbits[v]
            if new:
                expand(size + 1, new)
            elif size + 1 > best:
                best = size + 1
            cand &= ~bit

    if candidates:
        expand(0, candidates)
    return best


def _greedy_clique(g, members):
    members = sorted(members, key=lambda v: -len(g.neighbors(v)))
    clique = []
    for v in members:
        nb = set(g.neighbors(v).tolist())
        if all(u in nb for u in clique):
            clique.append(v)
    return len(clique)


def max_clique_containing(g: SparseGraph, i, cap=200):
    """Size of the largest clique containing node ``i``.

    Returns ``(size, exact)``.  Neighborhoods above ``cap`` nodes fall back
    to a greedy lower bound with ``exact=False``.
    """
    nb = [int(u) for u in g.neighbors(i) if u != i]
    if len(nb) + 1 > cap:
        return 1 + _greedy_clique(g, nb), False
    local = {u: k for k, u in enumerate(nb)}
    adjbits = [0] * len(nb)
    for u, k in local.items():
        bits = 0
        for w in g.neighbors(u):
            kk = local.get(int(w))
            if kk is not None and kk != k:
                bits |= 1 << kk
        adjbits[k] = bits
    return 1 + _max_clique_size(adjbits, (1 << len(nb)) - 1), True


def egonet_edge_counts(g: SparseGraph, triangles=None):
    """Edges inside each egonet and edges leaving it.

    Internal = degree + triangles.  Boundary = sum of egonet degrees minus
    twice the internal count.
    """
    a = g.simple_adjacency()
    deg = np.diff(a.indptr).astype(np.int64)
    if triangles is None:
        triangles = triangle_counts(g)
    internal = deg + triangles
    nb_deg_sum = np.asarray(a @ deg.astype(np.float64)).round().astype(np.int64)
    boundary = deg + nb_deg_sum - 2 * internal
    return internal, boundary
