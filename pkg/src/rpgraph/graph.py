"""Sparse graph containers, edge-list ingestion and transition matrices."""
from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

__all__ = [
    "EdgeListError",
    "SparseGraph",
    "TransitionMatrix",
    "NodeSplit",
    "load_edge_list",
    "transition_matrix",
    "bipartite_square",
    "split_nodes",
    "write_id_map",
    "load_labels",
]


class EdgeListError(ValueError):
    """Malformed edge-list input. ``lineno`` is 1-based, or None."""

    def __init__(self, message, lineno=None, path=None):
        self.lineno = lineno
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if lineno is not None:
            where += f"line {lineno}: "
        elif where:
            where += " "
        super().__init__(where + message)


@dataclass(frozen=True, eq=False)
class SparseGraph:
    """Compressed adjacency of a featureless graph.

    ``adj`` is a canonical CSR matrix (sorted indices, merged duplicates)
    whose entry ``(u, v)`` is the weight of edge u -> v.  Undirected graphs
    store both orientations.  ``partition`` is an int8 side label (0/1) per
    node for bipartite graphs, ``ids`` the original node ids when they were
    interned from text.
    """

    adj: sp.csr_matrix
    directed: bool = False
    partition: np.ndarray | None = None
    ids: tuple | None = None
    _digest: list = field(default_factory=list, repr=False, compare=False)

    @classmethod
    def from_edges(cls, node_count, src, dst, weights=None, directed=False,
                   partition=None, ids=None):
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        if weights is None:
            weights = np.ones(len(src))
        weights = np.asarray(weights, dtype=np.float64)
        if len(src) and (src.min() < 0 or dst.min() < 0
                         or max(src.max(), dst.max()) >= node_count):
            raise ValueError("edge endpoint outside [0, node_count)")
        if np.any(weights <= 0):
            raise ValueError("edge weights must be positive")
        if not directed:
            loops = src == dst
            src, dst = (np.concatenate([src, dst[~loops]]),
                        np.concatenate([dst, src[~loops]]))
            weights = np.concatenate([weights, weights[~loops]])
        adj = sp.coo_matrix((weights, (src, dst)),
                            shape=(node_count, node_count)).tocsr()
        adj.sum_duplicates()
        adj.sort_indices()
        if partition is not None:
            partition = np.asarray(partition, dtype=np.int8)
            coo = adj.tocoo()
            if np.any(partition[coo.row] == partition[coo.col]):
                raise ValueError("edge inside one side of the partition")
        return cls(adj=adj, directed=directed, partition=partition,
                   ids=None if ids is None else tuple(ids))

    @property
    def node_count(self) -> int:
        return self.adj.shape[0]

    @property
    def edge_count(self) -> int:
        """Number of edges; an undirected edge counts once."""
        if self.directed:
            return int(self.adj.nnz)
        loops = int(np.count_nonzero(self.adj.diagonal()))
        return (self.adj.nnz - loops) // 2 + loops

    def degrees(self, weighted=False):
        """Out-degree (row sums for ``weighted``, neighbor counts otherwise)."""
        if weighted:
            return np.asarray(self.adj.sum(axis=1)).ravel()
        return np.diff(self.adj.indptr).astype(np.float64)

    def neighbors(self, i):
        return self.adj.indices[self.adj.indptr[i]:self.adj.indptr[i + 1]]

    def simple_adjacency(self):
        """Unweighted, loop-free boolean-valued copy of the adjacency."""
        a = self.adj.copy()
        a.setdiag(0)
        a.eliminate_zeros()
        a.data[:] = 1.0
        return a

    def digest(self) -> bytes:
        """SHA-256 over the canonical CSR arrays and flags (32 bytes)."""
        if not self._digest:
            h = hashlib.sha256()
            h.update(b"SG1" + bytes([int(self.directed)]))
            h.update(np.int64(self.node_count).tobytes())
            h.update(self.adj.indptr.astype("<i8").tobytes())
            h.update(self.adj.indices.astype("<i8").tobytes())
            h.update(self.adj.data.astype("<f8").tobytes())
            if self.partition is not None:
                h.update(self.partition.astype("<i1").tobytes())
            self._digest.append(h.digest())
        return self._digest[0]


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    """Row-stochastic random-walk matrix.

    ``nodes`` maps local row ids to node ids of the source graph (only set
    when the matrix covers a subset, e.g. one side of a bipartite graph).
    """

    matrix: sp.csr_matrix
    source_digest: bytes = b"\0" * 32
    nodes: np.ndarray | None = None

    @property
    def node_count(self) -> int:
        return self.matrix.shape[0]

    def dense(self):
        return self.matrix.toarray()


@dataclass(frozen=True)
class NodeSplit:
    graph_a_nodes: np.ndarray
    graph_b_nodes: np.ndarray
    # original id -> id inside its part
    mapping: np.ndarray

    def part_of(self, node):
        return 0 if np.isin(node, self.graph_a_nodes) else 1


def _parse_id(token):
    try:
        value = int(token)
    except ValueError:
        return None
    return value if value >= 0 else None


def load_edge_list(path, directed=False, weighted=False, bipartite=False):
    """Read a whitespace separated ``src dst [weight]`` file.

    Lines starting with ``#`` and blank lines are skipped.  When every id is
    a nonnegative integer the ids are used as node indices directly;
    otherwise all ids are interned as strings in first-seen order and the
    original ids are kept on ``SparseGraph.ids``.  Duplicate edges merge by
    summing their weights.  A weight column is always validated, but only
    used when ``weighted`` is set.

    With ``bipartite=True`` the first column names nodes of side 0 and the
    second column nodes of side 1; ids are always interned and an id seen on
    both sides raises.
    """
    path = os.fspath(path)
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            parts = text.split()
            if len(parts) not in (2, 3):
                raise EdgeListError(
                    f"expected 2 or 3 columns, got {len(parts)}", lineno, path)
            w = 1.0
            if len(parts) == 3:
                try:
                    w = float(parts[2])
                except ValueError:
                    raise EdgeListError(f"bad weight {parts[2]!r}",
                                        lineno, path) from None
                if not np.isfinite(w) or w <= 0:
                    raise EdgeListError(f"weight must be positive, got {parts[2]}",
                                        lineno, path)
            rows.append((parts[0], parts[1], w if weighted else 1.0, lineno))

    if not rows:
        return SparseGraph.from_edges(0, [], [], directed=directed,
                                      partition=np.zeros(0) if bipartite else None)

    int_ids = [(_parse_id(a), _parse_id(b)) for a, b, _, _ in rows]
    use_ints = not bipartite and all(a is not None and b is not None
                                     for a, b in int_ids)
    weights = np.array([r[2] for r in rows])
    if use_ints:
        src = np.array([a for a, _ in int_ids], dtype=np.int64)
        dst = np.array([b for _, b in int_ids], dtype=np.int64)
        n = int(max(src.max(), dst.max())) + 1
        return SparseGraph.from_edges(n, src, dst, weights, directed=directed)

    index: dict[str, int] = {}
    side: list[int] = []
    src = np.empty(len(rows), dtype=np.int64)
    dst = np.empty(len(rows), dtype=np.int64)
    for e, (a, b, _, lineno) in enumerate(rows):
        for col, tok, out in ((0, a, src), (1, b, dst)):
            idx = index.get(tok)
            if idx is None:
                idx = index[tok] = len(index)
                side.append(col)
            elif bipartite and side[idx] != col:
                raise EdgeListError(
                    f"intra-partition edge: node {tok!r} appears on both sides",
                    lineno, path)
            out[e] = idx
    partition = np.array(side, dtype=np.int8) if bipartite else None
    return SparseGraph.from_edges(len(index), src, dst, weights,
                                  directed=directed, partition=partition,
                                  ids=list(index))


def write_id_map(path, graph):
    """Write ``id<TAB>original`` lines for interned graphs."""
    ids = graph.ids if graph.ids is not None else range(graph.node_count)
    with open(path, "w", encoding="utf-8") as fh:
        for i, orig in enumerate(ids):
            fh.write(f"{i}\t{orig}\n")


def load_labels(path, graph=None):
    """Read ``node_id<TAB>label`` lines.

    Returns ``(labels, classes)`` where ``labels`` is an int array over the
    graph's nodes (-1 for unlabeled) indexing into the sorted ``classes``.
    Node ids are resolved through ``graph.ids`` when the graph was interned.
    """
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            parts = text.split()
            if len(parts) != 2:
                raise EdgeListError("expected `node_id label`", lineno, path)
            pairs.append((parts[0], parts[1], lineno))
    lookup = None
    if graph is not None and graph.ids is not None:
        lookup = {str(v): k for k, v in enumerate(graph.ids)}
    n = graph.node_count if graph is not None else 0
    resolved = []
    for tok, lab, lineno in pairs:
        if lookup is not None:
            if tok not in lookup:
                raise EdgeListError(f"unknown node {tok!r}", lineno, path)
            node = lookup[tok]
        else:
            node = _parse_id(tok)
            if node is None:
                raise EdgeListError(f"bad node id {tok!r}", lineno, path)
        resolved.append((node, lab))
    if graph is None:
        n = max((r[0] for r in resolved), default=-1) + 1
    raw = [r[1] for r in resolved]
    if raw and all(_parse_id(x) is not None for x in raw):
        classes = sorted(set(raw), key=int)
    else:
        classes = sorted(set(raw))
    cindex = {c: k for k, c in enumerate(classes)}
    labels = np.full(n, -1, dtype=np.int64)
    for node, lab in resolved:
        if node >= n:
            raise EdgeListError(f"node {node} outside graph", None, path)
        labels[node] = cindex[lab]
    return labels, classes


def _row_normalize(mat, self_loop_empty=True):
    mat = sp.csr_matrix(mat, dtype=np.float64)
    sums = np.asarray(mat.sum(axis=1)).ravel()
    empty = sums == 0
    inv = np.divide(1.0, sums, out=np.zeros_like(sums), where=~empty)
    out = sp.diags(inv) @ mat
    if self_loop_empty and empty.any():
        if mat.shape[0] != mat.shape[1]:
            raise ValueError("self-loops need a square matrix")
        idx = np.flatnonzero(empty)
        out = out + sp.csr_matrix((np.ones(len(idx)), (idx, idx)), shape=mat.shape)
    out = sp.csr_matrix(out)
    out.sort_indices()
    return out


def transition_matrix(g: SparseGraph) -> TransitionMatrix:
    """Row-stochastic matrix ``A[i, j] = w(i, j) / sum_j w(i, j)``.

    Rows with no outgoing weight get a unit self-loop.
    """
    return TransitionMatrix(_row_normalize(g.adj), source_digest=g.digest())


def bipartite_square(g: SparseGraph, side: int) -> TransitionMatrix:
    """Two-step walk ``side -> other -> side`` as a sparse stochastic matrix.

    The result is indexed by the nodes of ``side`` in increasing graph id
    order (see ``TransitionMatrix.nodes``).  Side nodes without edges get a
    unit self-loop.
    """
    if g.partition is None:
        raise ValueError("graph has no bipartite partition")
    if side not in (0, 1):
        raise ValueError(f"side must be 0 or 1, got {side}")
    here = np.flatnonzero(g.partition == side)
    there = np.flatnonzero(g.partition != side)
    out_step = _row_normalize(g.adj[here][:, there], self_loop_empty=False)
    back_step = _row_normalize(g.adj[there][:, here], self_loop_empty=False)
    two = out_step @ back_step
    two = _row_normalize(two)
    h = hashlib.sha256(g.digest() + bytes([side])).digest()
    return TransitionMatrix(two, source_digest=h, nodes=here)


def induced_subgraph(g: SparseGraph, nodes) -> SparseGraph:
    nodes = np.asarray(nodes, dtype=np.int64)
    sub = g.adj[nodes][:, nodes].tocsr()
    sub.sort_indices()
    part = None if g.partition is None else g.partition[nodes]
    ids = None if g.ids is None else tuple(g.ids[k] for k in nodes)
    return SparseGraph(adj=sub, directed=g.directed, partition=part, ids=ids)


def split_nodes(g: SparseGraph, fraction=0.5, seed=0):
    """Randomly split nodes into two parts and drop the crossing edges.

    Part A receives ``round(fraction * n)`` nodes.  Both parts keep node
    order from ``g``; ``NodeSplit.mapping`` gives each original node its id
    inside its own part.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must lie in (0, 1), got {fraction}")
    n = g.node_count
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    in_a = np.zeros(n, dtype=bool)
    in_a[perm[:int(round(fraction * n))]] = True
    a_nodes = np.flatnonzero(in_a)
    b_nodes = np.flatnonzero(~in_a)
    mapping = np.empty(n, dtype=np.int64)
    mapping[a_nodes] = np.arange(len(a_nodes))
    mapping[b_nodes] = np.arange(len(b_nodes))
    split = NodeSplit(a_nodes, b_nodes, mapping)
    return induced_subgraph(g, a_nodes), induced_subgraph(g, b_nodes), split
