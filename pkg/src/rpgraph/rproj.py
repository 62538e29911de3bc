"""Random projections of transition-matrix powers.

``propagate`` builds the stack ``R[k] = A^k R[0]`` by chain multiplication,
one sparse-times-dense product per power, so each step costs O(|E| D) and
no |V| x |V| matrix is ever formed.
"""
from __future__ import annotations

import hashlib
import os
import struct
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .graph import TransitionMatrix

__all__ = [
    "ProjectionConfig",
    "ProjectionSet",
    "MemoryBudgetError",
    "ProjectionFileError",
    "GraphDigestWarning",
    "init_projection",
    "propagate",
    "propagate_from",
    "save_projections",
    "load_projections",
]

DEFAULT_MEMORY_BUDGET = 8 * 2**30

_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)

INIT_KINDS = {"gaussian": 0, "sparse": 1, "custom": 2}


class MemoryBudgetError(MemoryError):
    def __init__(self, required, budget):
        self.required = required
        self.budget = budget
        super().__init__(f"projection set needs {required} bytes, "
                         f"budget is {budget} bytes")


class ProjectionFileError(ValueError):
    pass


class GraphDigestWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ProjectionConfig:
    """Parameters of the random matrix and the number of powers.

    ``beta=None`` disables degree normalization; otherwise row i of the
    initial matrix is scaled by ``(d_i / 2m) ** beta``.
    """

    dim: int = 128
    max_power: int = 10
    init: str = "gaussian"
    sparsity: float = 3.0
    beta: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if self.max_power < 0:
            raise ValueError(f"max_power must be >= 0, got {self.max_power}")
        if self.init not in INIT_KINDS:
            raise ValueError(f"unknown init {self.init!r}")
        if self.init == "sparse" and self.sparsity < 1:
            raise ValueError(f"sparsity must be >= 1, got {self.sparsity}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")

    @property
    def second_moment(self) -> float:
        """``D * sigma^2``, the scale of ``E[R R^T]``."""
        if self.init == "sparse":
            return float(self.dim)
        return 1.0


@dataclass(frozen=True, eq=False)
class ProjectionSet:
    """Stacked projections, ``matrices[k]`` is ``A^k R[0]`` (|V| x D)."""

    matrices: np.ndarray
    config: ProjectionConfig
    graph_hash: bytes = b"\0" * 32

    @property
    def node_count(self) -> int:
        return self.matrices.shape[1]

    @property
    def dim(self) -> int:
        return self.matrices.shape[2]

    @property
    def max_power(self) -> int:
        return self.matrices.shape[0] - 1

    @property
    def scale(self) -> float:
        return self.config.second_moment

    def digest(self) -> bytes:
        h = hashlib.sha256(self.graph_hash)
        h.update(np.ascontiguousarray(self.matrices).tobytes())
        return h.digest()


def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _uniforms(seed, rows, cols, stream):
    """Uniform(0, 1) draws keyed by (seed, row, col, stream)."""
    with np.errstate(over="ignore"):
        base = _mix64(np.uint64(seed) + _GOLDEN)
        rowkey = _mix64(base + (rows.astype(np.uint64) + np.uint64(1)) * _GOLDEN)
        ctr = cols.astype(np.uint64) * np.uint64(2) + np.uint64(stream + 1)
        bits = _mix64(rowkey[:, None] + ctr[None, :] * _GOLDEN)
    return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def _raw_block(config, rows, cols):
    if config.init == "gaussian":
        u1 = _uniforms(config.seed, rows, cols, 0)
        u2 = _uniforms(config.seed, rows, cols, 1)
        z = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
        return z / np.sqrt(config.dim)
    if config.init == "sparse":
        s = config.sparsity
        u = _uniforms(config.seed, rows, cols, 0)
        out = np.zeros_like(u)
        out[u < 1.0 / (2 * s)] = np.sqrt(s)
        out[(u >= 1.0 / (2 * s)) & (u < 1.0 / s)] = -np.sqrt(s)
        return out
    raise ValueError("custom init has no generator; pass `initial`")


def init_projection(node_count, config, degrees=None, dtype=np.float64,
                    chunk=16384):
    """Draw the |V| x D initial matrix.

    Entry (i, p) depends only on ``(config.seed, i, p)``: it is computed
    from a stateless 64-bit hash, not from a sequential stream.  Gaussian
    entries have variance ``1/D``; sparse entries take ``+-sqrt(s)`` with
    probability ``1/(2s)`` each and 0 otherwise.
    """
    cols = np.arange(config.dim)
    out = np.empty((node_count, config.dim), dtype=dtype)
    for start in range(0, node_count, chunk):
        rows = np.arange(start, min(start + chunk, node_count))
        out[rows] = _raw_block(config, rows, cols)
    if config.beta is not None:
        if degrees is None:
            raise ValueError("degree normalization needs node degrees")
        degrees = np.asarray(degrees, dtype=np.float64)
        m = degrees.sum() / 2.0
        # isolated nodes are treated as degree 1 so the factor stays finite
        d = np.maximum(degrees, 1.0)
        factor = (d / (2.0 * m)) ** config.beta if m > 0 else np.ones_like(d)
        out *= factor[:, None].astype(dtype)
    return out


def _spmm(a, r, threads):
    if threads <= 1 or a.shape[0] < 2 * threads:
        return np.asarray(a @ r)
    bounds = np.linspace(0, a.shape[0], threads + 1).astype(int)
    out = np.empty_like(r, shape=(a.shape[0], r.shape[1]))

    def work(k):
        lo, hi = bounds[k], bounds[k + 1]
        out[lo:hi] = a[lo:hi] @ r

    with ThreadPoolExecutor(threads) as pool:
        list(pool.map(work, range(threads)))
    return out


def propagate_from(a, initial, max_power, threads=1):
    """Chain products ``[R0, A R0, A^2 R0, ...]`` stacked on axis 0.

    ``a`` is any scipy sparse matrix; results are independent of
    ``threads`` since each output row reads one row of ``a``.
    """
    a = sp.csr_matrix(a, dtype=initial.dtype)
    out = np.empty((max_power + 1,) + initial.shape, dtype=initial.dtype)
    out[0] = initial
    for k in range(1, max_power + 1):
        out[k] = _spmm(a, out[k - 1], threads)
    return out


def propagate(t: TransitionMatrix, config: ProjectionConfig, initial=None,
              dtype=np.float32, threads=1, degrees=None,
              memory_budget=DEFAULT_MEMORY_BUDGET) -> ProjectionSet:
    """Initialize ``R[0]`` and propagate it through ``t``.

    ``initial`` overrides the random draw (e.g. the identity matrix, which
    turns every ``matrices[k]`` into the exact k-th power).  ``degrees`` is
    required when ``config.beta`` is set.
    """
    n = t.node_count
    dim = config.dim if initial is None else np.shape(initial)[1]
    width = np.dtype(dtype).itemsize
    required = (config.max_power + 1) * n * dim * width
    if required > memory_budget:
        raise MemoryBudgetError(required, memory_budget)
    if initial is None:
        r0 = init_projection(n, config, degrees=degrees, dtype=dtype)
    else:
        r0 = np.array(initial, dtype=dtype)
        if r0.shape[0] != n:
            raise ValueError(f"initial has {r0.shape[0]} rows, graph has {n}")
        if dim != config.dim or config.init != "custom":
            config = ProjectionConfig(dim=dim, max_power=config.max_power,
                                      init="custom", seed=config.seed)
    mats = propagate_from(t.matrix, r0, config.max_power, threads=threads)
    return ProjectionSet(mats, config, graph_hash=t.source_digest)


# --- binary file -----------------------------------------------------------

MAGIC = b"RPJ1"
VERSION = 1
FLAG_DEGREE_NORM = 1
FLAG_F64 = 2
_HEADER = struct.Struct("<4sHHQIIQBdd32s")


def save_projections(ps: ProjectionSet, path):
    """Write the RPJ1 file; the payload is f32 unless the set is f64."""
    cfg = ps.config
    wide = ps.matrices.dtype == np.float64
    flags = (FLAG_DEGREE_NORM if cfg.beta is not None else 0) | (FLAG_F64 if wide else 0)
    header = _HEADER.pack(MAGIC, VERSION, flags, ps.node_count, ps.dim,
                          ps.max_power, cfg.seed, INIT_KINDS[cfg.init],
                          cfg.beta if cfg.beta is not None else 0.0,
                          float(cfg.sparsity), ps.graph_hash)
    payload = np.ascontiguousarray(ps.matrices, dtype="<f8" if wide else "<f4")
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(payload.tobytes())
    os.replace(tmp, path)


def load_projections(path, expected_digest=None) -> ProjectionSet:
    """Read an RPJ1 file.

    A ``graph_hash`` differing from ``expected_digest`` is reported with a
    ``GraphDigestWarning`` and the set is still returned.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        if blob[:4] != MAGIC[:len(blob[:4])]:
            raise ProjectionFileError("bad magic")
        raise ProjectionFileError("truncated header")
    (magic, version, flags, n, dim, power, seed, kind, beta, sparsity,
     digest) = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise ProjectionFileError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ProjectionFileError(f"unsupported version {version}")
    dtype = np.dtype("<f8" if flags & FLAG_F64 else "<f4")
    expected = _HEADER.size + (power + 1) * n * dim * dtype.itemsize
    if len(blob) < expected:
        raise ProjectionFileError(
            f"truncated file: {len(blob)} bytes, expected {expected}")
    if len(blob) > expected:
        raise ProjectionFileError(
            f"trailing bytes: {len(blob)} bytes, expected {expected}")
    init = {v: k for k, v in INIT_KINDS.items()}.get(kind)
    if init is None:
        raise ProjectionFileError(f"unknown init kind {kind}")
    cfg = ProjectionConfig(dim=dim, max_power=power, init=init,
                           sparsity=sparsity if init == "sparse" else 3.0,
                           beta=beta if flags & FLAG_DEGREE_NORM else None,
                           seed=seed)
    mats = np.frombuffer(blob, dtype=dtype, offset=_HEADER.size)
    mats = mats.reshape(power + 1, n, dim).astype(dtype.newbyteorder("="))
    if expected_digest is not None and expected_digest != digest:
        warnings.warn("projection file was built from a different graph",
                      GraphDigestWarning, stacklevel=2)
    return ProjectionSet(mats, cfg, graph_hash=digest)
