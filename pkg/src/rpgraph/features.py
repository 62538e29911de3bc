"""Feature tables for nodes and node pairs.

Four families are provided:

* RP DotProd: ``F(k,s)_ij = R[k]_i . R[s]_j`` read off a ``ProjectionSet``;
* exact walk-meeting probabilities from the transition matrix (oracle);
* invariant graph features (IGF);
* Gram features of externally trained embedding vectors (RI-Gram).

Column order is fixed.  Single-node RP columns run over ``k <= s`` in
lexicographic order.  Pair columns are the i-block (``k <= s``), then the
ij-block (all ``(k, s)``, row-major), then the j-block (``k <= s``).
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import graphstats
from .graph import SparseGraph, TransitionMatrix
from .rproj import ProjectionSet

__all__ = [
    "FeatureTable",
    "ExternalEmbeddings",
    "DenseCapError",
    "node_feature_names",
    "pair_feature_names",
    "IGF_NAMES",
    "rp_node_features",
    "rp_pair_features",
    "rp_node_table",
    "rp_pair_table",
    "oracle_features",
    "oracle_node_features",
    "igf_features",
    "igf_table",
    "igf_pair_table",
    "ri_gram_features",
    "ri_gram_table",
    "load_embeddings",
    "write_csv",
    "read_csv",
    "save_table",
    "load_table",
]

IGF_NAMES = ("degree", "pagerank", "triangles", "core_number", "max_clique",
             "egonet_edges", "egonet_boundary")

DEFAULT_DENSE_CAP = 2000


class DenseCapError(ValueError):
    pass


@dataclass(eq=False)
class FeatureTable:
    """Rows of named features keyed by node id or ordered node pair.

    ``keys`` has shape (n, 1) for node tables and (n, 2) for pair tables.
    ``provenance`` records the method, configuration and input digests.
    ``flags`` lists keys whose values are approximate (e.g. a greedy
    clique bound).
    """

    schema: list
    keys: np.ndarray
    values: np.ndarray
    provenance: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)

    def __post_init__(self):
        self.keys = np.asarray(self.keys, dtype=np.int64).reshape(len(self.keys), -1)
        self.values = np.asarray(self.values)
        if self.values.ndim != 2 or self.values.shape[1] != len(self.schema):
            raise ValueError(f"rows have {self.values.shape[-1]} columns, "
                             f"schema has {len(self.schema)}")
        if len(self.keys) != len(self.values):
            raise ValueError("keys and values differ in length")

    def __len__(self):
        return len(self.values)

    @property
    def arity(self) -> int:
        return self.keys.shape[1]

    def row(self, *key):
        hit = np.flatnonzero((self.keys == np.asarray(key)).all(axis=1))
        if not len(hit):
            raise KeyError(key)
        return self.values[hit[0]]

    def hstack(self, other: "FeatureTable") -> "FeatureTable":
        if not np.array_equal(self.keys, other.keys):
            raise ValueError("tables are keyed differently")
        prov = {"method": "concat", "parts": [self.provenance, other.provenance]}
        return FeatureTable(list(self.schema) + list(other.schema), self.keys,
                            np.hstack([self.values, other.values]), prov,
                            sorted(set(self.flags) | set(other.flags)))

    def digest(self) -> bytes:
        h = hashlib.sha256()
        h.update("\x1f".join(self.schema).encode())
        h.update(self.keys.astype("<i8").tobytes())
        h.update(np.asarray(self.values, dtype="<f4").tobytes())
        h.update(json.dumps(self.provenance, sort_keys=True, default=str).encode())
        return h.digest()


@dataclass
class ExternalEmbeddings:
    """Per-node input vectors ``x`` and optional output vectors ``y``."""

    inputs: dict
    outputs: dict = field(default_factory=dict)

    def __post_init__(self):
        dims = {len(v) for v in self.inputs.values()} | {len(v) for v in self.outputs.values()}
        if len(dims) > 1:
            raise ValueError(f"embedding vectors differ in length: {sorted(dims)}")


def node_feature_names(max_power, prefix=""):
    return [f"{prefix}k{k}_s{s}" for k in range(max_power + 1)
            for s in range(k, max_power + 1)]


def pair_feature_names(max_power):
    cross = [f"ij_k{k}_s{s}" for k in range(max_power + 1)
             for s in range(max_power + 1)]
    return (node_feature_names(max_power, "ii_") + cross
            + node_feature_names(max_power, "jj_"))


def _check_nodes(n, *nodes):
    for v in nodes:
        v = np.asarray(v)
        if v.size and (v.min() < 0 or v.max() >= n):
            raise IndexError(f"node id outside [0, {n})")


def _gram_blocks(ps, left, right):
    # (n, N+1, D) stacks in wide precision
    a = np.ascontiguousarray(ps.matrices[:, left, :].transpose(1, 0, 2), dtype=np.float64)
    if right is None:
        return a @ a.transpose(0, 2, 1) / ps.scale, None, None
    b = np.ascontiguousarray(ps.matrices[:, right, :].transpose(1, 0, 2), dtype=np.float64)
    aa = a @ a.transpose(0, 2, 1)
    ab = a @ b.transpose(0, 2, 1)
    bb = b @ b.transpose(0, 2, 1)
    return aa / ps.scale, ab / ps.scale, bb / ps.scale


def _pack_node(gram):
    n1 = gram.shape[-1]
    iu = np.triu_indices(n1)
    return gram[:, iu[0], iu[1]]


def _pack_pair(aa, ab, bb):
    n = aa.shape[0]
    return np.hstack([_pack_node(aa), ab.reshape(n, -1), _pack_node(bb)])


def _chunked(fn, count, threads, chunk=4096):
    """Row-chunked evaluation; output is independent of ``threads``."""
    starts = list(range(0, count, chunk))
    if threads <= 1 or len(starts) <= 1:
        parts = [fn(s, min(s + chunk, count)) for s in starts]
    else:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(lambda s: fn(s, min(s + chunk, count)), starts))
    return parts


def rp_node_features(ps: ProjectionSet, i) -> np.ndarray:
    """All ``R[k]_i . R[s]_i`` for ``k <= s``; length (N+1)(N+2)/2."""
    _check_nodes(ps.node_count, i)
    return _pack_node(_gram_blocks(ps, np.array([i]), None)[0])[0]


def rp_pair_features(ps: ProjectionSet, i, j) -> np.ndarray:
    """i-block, ij-block and j-block; length (N+1)(N+2) + (N+1)^2."""
    _check_nodes(ps.node_count, i, j)
    return _pack_pair(*_gram_blocks(ps, np.array([i]), np.array([j])))[0]


def _rp_provenance(ps):
    return {"method": "rp-dotprod", "config": repr(ps.config),
            "graph": ps.graph_hash.hex()}


def rp_node_table(ps: ProjectionSet, nodes=None, threads=1) -> FeatureTable:
    nodes = np.arange(ps.node_count) if nodes is None else np.asarray(nodes, dtype=np.int64)
    _check_nodes(ps.node_count, nodes)
    parts = _chunked(lambda lo, hi: _pack_node(_gram_blocks(ps, nodes[lo:hi], None)[0]),
                     len(nodes), threads)
    values = np.vstack(parts) if parts else np.zeros((0, len(node_feature_names(ps.max_power))))
    return FeatureTable(node_feature_names(ps.max_power), nodes[:, None], values,
                        _rp_provenance(ps))


def rp_pair_table(ps: ProjectionSet, pairs, threads=1) -> FeatureTable:
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    _check_nodes(ps.node_count, pairs)
    parts = _chunked(lambda lo, hi: _pack_pair(*_gram_blocks(ps, pairs[lo:hi, 0],
                                                              pairs[lo:hi, 1])),
                     len(pairs), threads)
    names = pair_feature_names(ps.max_power)
    values = np.vstack(parts) if parts else np.zeros((0, len(names)))
    return FeatureTable(names, pairs, values, _rp_provenance(ps))


def _walk_rows(t, i, max_power, dense_cap):
    n = t.node_count
    if n > dense_cap:
        raise DenseCapError(f"graph has {n} nodes, dense cap is {dense_cap}")
    _check_nodes(n, i)
    at = t.matrix.T.tocsr().astype(np.float64)
    rows = np.zeros((max_power + 1, n))
    rows[0, i] = 1.0
    for k in range(1, max_power + 1):
        rows[k] = at @ rows[k - 1]
    return rows


def oracle_features(t: TransitionMatrix, i, j, max_power,
                    dense_cap=DEFAULT_DENSE_CAP) -> np.ndarray:
    """Exact meeting probabilities, in ``rp_pair_features`` order.

    Row i of ``A^k`` is obtained by pushing the unit vector ``e_i`` through
    ``k`` left multiplications.
    """
    ri = _walk_rows(t, i, max_power, dense_cap)
    rj = _walk_rows(t, j, max_power, dense_cap)
    aa, ab, bb = ri @ ri.T, ri @ rj.T, rj @ rj.T
    return _pack_pair(aa[None], ab[None], bb[None])[0]


def oracle_node_features(t: TransitionMatrix, i, max_power,
                         dense_cap=DEFAULT_DENSE_CAP) -> np.ndarray:
    ri = _walk_rows(t, i, max_power, dense_cap)
    return _pack_node((ri @ ri.T)[None])[0]


def _require_undirected(g):
    if g.directed:
        raise ValueError("invariant graph features need an undirected graph")


def igf_table(g: SparseGraph, nodes=None, clique_cap=200) -> FeatureTable:
    """The seven invariant graph features for ``nodes`` (default: all).

    Columns: degree, PageRank (0.85 damping), triangles, core number,
    largest clique containing the node, egonet internal edges, egonet
    boundary edges.
    """
    _require_undirected(g)
    n = g.node_count
    nodes = np.arange(n) if nodes is None else np.asarray(nodes, dtype=np.int64)
    _check_nodes(n, nodes)
    deg = np.diff(g.simple_adjacency().indptr)
    pr = graphstats.pagerank(g)
    tri = graphstats.triangle_counts(g)
    core = graphstats.core_numbers(g)
    internal, boundary = graphstats.egonet_edge_counts(g, tri)
    values = np.empty((len(nodes), len(IGF_NAMES)))
    flags = []
    for r, v in enumerate(nodes):
        clique, exact = graphstats.max_clique_containing(g, v, cap=clique_cap)
        if not exact:
            flags.append(int(v))
        values[r] = (deg[v], pr[v], tri[v], core[v], clique, internal[v], boundary[v])
    prov = {"method": "igf", "graph": g.digest().hex(), "clique_cap": clique_cap}
    return FeatureTable(list(IGF_NAMES), nodes[:, None], values, prov, flags)


def igf_features(g: SparseGraph, i, clique_cap=200) -> np.ndarray:
    return igf_table(g, [i], clique_cap).values[0]


def igf_pair_table(g: SparseGraph, pairs, clique_cap=200) -> FeatureTable:
    """IGF of both endpoints side by side (14 columns)."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    uniq, inv = np.unique(pairs, return_inverse=True)
    base = igf_table(g, uniq, clique_cap)
    inv = inv.reshape(-1, 2)
    values = np.hstack([base.values[inv[:, 0]], base.values[inv[:, 1]]])
    names = [f"i_{c}" for c in IGF_NAMES] + [f"j_{c}" for c in IGF_NAMES]
    flags = [tuple(p) for p in pairs.tolist() if p[0] in base.flags or p[1] in base.flags]
    return FeatureTable(names, pairs, values, base.provenance, flags)


def _vectors_for(emb, node, use_output):
    if node not in emb.inputs:
        raise KeyError(f"no input vector for node {node}")
    vecs = [np.asarray(emb.inputs[node], dtype=np.float64)]
    if use_output:
        if node not in emb.outputs:
            raise KeyError(f"no output vector for node {node}")
        vecs.append(np.asarray(emb.outputs[node], dtype=np.float64))
    return vecs


def ri_gram_features(emb: ExternalEmbeddings, i, j=None, use_output=None) -> np.ndarray:
    """Upper-triangular Gram entries of the node's embedding vectors.

    The vectors are ordered ``(x_i, y_i, x_j, y_j)`` (``y`` omitted when
    ``use_output`` is false), and entries are listed row by row over the
    upper triangle, self products included.  So a single node with both
    vectors gives ``(x.x, x.y, y.y)``, a pair with inputs only gives
    ``(xi.xi, xi.xj, xj.xj)`` and a pair with both gives 10 values.
    ``use_output=None`` uses output vectors when every requested node has
    one.
    """
    nodes = [i] if j is None else [i, j]
    if use_output is None:
        use_output = all(v in emb.outputs for v in nodes)
    vecs = []
    for v in nodes:
        vecs.extend(_vectors_for(emb, v, use_output))
    m = np.vstack(vecs)
    gram = m @ m.T
    return gram[np.triu_indices(len(vecs))]


def ri_gram_names(pair, use_output):
    labels = ["xi", "yi", "xj", "yj"] if use_output else ["xi", "xj"]
    if not pair:
        labels = labels[:2] if use_output else labels[:1]
    return [f"{labels[a]}.{labels[b]}" for a in range(len(labels))
            for b in range(a, len(labels))]


def ri_gram_table(emb: ExternalEmbeddings, keys, use_output=True) -> FeatureTable:
    keys = np.asarray(keys, dtype=np.int64)
    keys = keys.reshape(len(keys), -1)
    pair = keys.shape[1] == 2
    rows = [ri_gram_features(emb, int(k[0]), int(k[1]) if pair else None, use_output)
            for k in keys]
    names = ri_gram_names(pair, use_output)
    values = np.vstack(rows) if rows else np.zeros((0, len(names)))
    return FeatureTable(names, keys, values, {"method": "ri-gram"})


def load_embeddings(path, graph=None) -> ExternalEmbeddings:
    """Read ``node_id<TAB>IN|OUT<TAB>v1 v2 ...`` lines."""
    lookup = None
    if graph is not None and graph.ids is not None:
        lookup = {str(v): k for k, v in enumerate(graph.ids)}
    inputs, outputs = {}, {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            parts = text.split("\t")
            if len(parts) != 3 or parts[1] not in ("IN", "OUT"):
                raise ValueError(f"{path}:line {lineno}: expected `id<TAB>IN|OUT<TAB>values`")
            tok = parts[0]
            node = lookup[tok] if lookup is not None else int(tok)
            try:
                vec = np.array([float(x) for x in parts[2].split()])
            except ValueError:
                raise ValueError(f"{path}:line {lineno}: bad vector") from None
            (inputs if parts[1] == "IN" else outputs)[node] = vec
    return ExternalEmbeddings(inputs, outputs)


# --- table files -------------------------------------------------------------

def write_csv(table: FeatureTable, path):
    """Header ``i[,j],f1,...,fm`` then one row per key."""
    key_names = ["i", "j"][:table.arity]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(key_names + list(table.schema))
    for k, v in zip(table.keys.tolist(), table.values.tolist()):
        w.writerow(k + [repr(float(x)) for x in v])
    _atomic_write(path, buf.getvalue().encode())


def read_csv(path) -> FeatureTable:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    arity = 2 if len(header) > 1 and header[1] == "j" else 1
    body = np.array(rows[1:], dtype=np.float64).reshape(len(rows) - 1, len(header))
    return FeatureTable(header[arity:], body[:, :arity].astype(np.int64), body[:, arity:],
                        {"method": "csv", "path": os.fspath(path)})


FTB_MAGIC = b"FTB1"
_FTB_HEAD = struct.Struct("<4sHBQII")


def save_table(table: FeatureTable, path):
    """Binary table: header, JSON meta block (schema, provenance, flags),
    int64 keys, then f32 rows; all little-endian."""
    meta = json.dumps({"schema": list(table.schema), "provenance": table.provenance,
                       "flags": [list(f) if isinstance(f, tuple) else f for f in table.flags]},
                      sort_keys=True, default=str).encode()
    head = _FTB_HEAD.pack(FTB_MAGIC, 1, table.arity, len(table),
                          len(table.schema), len(meta))
    blob = (head + meta + table.keys.astype("<i8").tobytes()
            + np.asarray(table.values, dtype="<f4").tobytes())
    _atomic_write(path, blob)


def load_table(path) -> FeatureTable:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _FTB_HEAD.size or blob[:4] != FTB_MAGIC:
        raise ValueError(f"{path}: not an FTB1 table")
    _, version, arity, rows, cols, meta_len = _FTB_HEAD.unpack_from(blob)
    if version != 1:
        raise ValueError(f"{path}: unsupported version {version}")
    off = _FTB_HEAD.size
    need = off + meta_len + rows * arity * 8 + rows * cols * 4
    if len(blob) != need:
        raise ValueError(f"{path}: expected {need} bytes, found {len(blob)}")
    meta = json.loads(blob[off:off + meta_len])
    off += meta_len
    keys = np.frombuffer(blob, "<i8", rows * arity, off).reshape(rows, arity)
    off += rows * arity * 8
    values = np.frombuffer(blob, "<f4", rows * cols, off).reshape(rows, cols)
    flags = [tuple(f) if isinstance(f, list) else f for f in meta["flags"]]
    return FeatureTable(meta["schema"], keys.astype(np.int64),
                        values.astype(np.float32), meta["provenance"], flags)


def _atomic_write(path, data: bytes):
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)
