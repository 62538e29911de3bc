"""Cross-graph experiments: synthetic graphs, tasks, training and reports.

An experiment trains one model on pooled samples from the training graphs
(with a seeded validation share for model selection) and scores it on every
held-out test graph.  Nothing derived from a test graph reaches training or
model selection.
"""
from __future__ import annotations

import csv
import hashlib
import io
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import features as feat
from . import neuralnet as nn
from .graph import (SparseGraph, bipartite_square, load_edge_list, load_labels,
                    transition_matrix)
from .metrics import (majority_baseline, metric_accuracy, metric_auc,
                      metric_mapped_accuracy)
from .rproj import ProjectionConfig, propagate

__all__ = [
    "SbmSpec", "generate_sbm", "generate_gnm", "make_pair_samples",
    "GraphSource", "ExperimentSpec", "ConfigError", "parse_experiment",
    "load_experiment", "evaluate", "Report", "METHODS", "TASKS",
]

METHODS = ("rp-dotprod", "rp-convnet", "igf", "ri-gram", "ensemble")
TASKS = ("node-class", "pair-same-class")


@dataclass(frozen=True)
class SbmSpec:
    """Planted-partition graph parameters.

    ``p_intra`` may be one probability or one per block.
    """

    block_sizes: tuple
    p_intra: float | tuple = 0.1
    p_inter: float = 0.01
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "block_sizes", tuple(int(b) for b in self.block_sizes))
        if len(self.block_sizes) < 2:
            raise ValueError("an SBM needs at least two blocks")
        if any(b < 1 for b in self.block_sizes):
            raise ValueError("block sizes must be positive")
        intra = self.intra_probabilities()
        for p in intra + [self.p_inter]:
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"probability {p} outside [0, 1]")

    def intra_probabilities(self):
        if np.ndim(self.p_intra) == 0:
            return [float(self.p_intra)] * len(self.block_sizes)
        if len(self.p_intra) != len(self.block_sizes):
            raise ValueError("need one intra-block probability per block")
        return [float(p) for p in self.p_intra]


def _decode_triangle(t):
    """Index into the strict lower triangle -> (i, j) with i < j."""
    t = np.asarray(t, dtype=np.int64)
    j = ((1 + np.sqrt(1 + 8 * t.astype(np.float64))) // 2).astype(np.int64)
    j -= (j * (j - 1) // 2) > t
    j += ((j + 1) * j // 2) <= t
    return t - j * (j - 1) // 2, j


def _sample_pairs(rng, count, p):
    k = rng.binomial(count, p)
    if k == 0:
        return np.zeros(0, dtype=np.int64)
    return np.sort(rng.choice(count, size=k, replace=False))


def generate_sbm(spec: SbmSpec):
    """Undirected simple SBM graph and its block labels."""
    rng = np.random.default_rng(spec.seed)
    sizes = spec.block_sizes
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    intra = spec.intra_probabilities()
    src, dst = [], []
    for a, na in enumerate(sizes):
        idx = _sample_pairs(rng, na * (na - 1) // 2, intra[a])
        i, j = _decode_triangle(idx)
        src.append(i + offsets[a])
        dst.append(j + offsets[a])
        for b in range(a + 1, len(sizes)):
            nb = sizes[b]
            idx = _sample_pairs(rng, na * nb, spec.p_inter)
            src.append(idx // nb + offsets[a])
            dst.append(idx % nb + offsets[b])
    n = int(offsets[-1])
    g = SparseGraph.from_edges(n, np.concatenate(src), np.concatenate(dst))
    labels = np.repeat(np.arange(len(sizes)), sizes)
    return g, labels


def generate_gnm(n, m, seed=0):
    """Uniform random simple graph with ``n`` nodes and ``m`` edges."""
    rng = np.random.default_rng(seed)
    total = n * (n - 1) // 2
    if m > total:
        raise ValueError(f"{m} edges do not fit in {n} nodes")
    idx = np.sort(rng.choice(total, size=m, replace=False))
    i, j = _decode_triangle(idx)
    return SparseGraph.from_edges(n, i, j)


def make_pair_samples(labels, count, seed=0, positive_fraction=0.5):
    """Balanced same-class / different-class node pairs.

    Same-class pairs are uniform over all unordered same-class pairs,
    different-class pairs uniform over all unordered different-class
    pairs; each pair's orientation is random.  Nodes labeled -1 are
    ignored.  Returns ``(pairs, same)``: an (count, 2) id array and a 0/1
    array.  Only this binary label is meant to reach training.
    """
    labels = np.asarray(labels)
    nodes = np.flatnonzero(labels >= 0)
    lab = labels[nodes]
    classes, counts = np.unique(lab, return_counts=True)
    if len(classes) < 2:
        raise ValueError("pair sampling needs at least two distinct labels")
    weights = counts * (counts - 1) / 2.0
    n_same = int(round(positive_fraction * count))
    n_diff = count - n_same
    if n_same and weights.sum() == 0:
        raise ValueError("no class has two members")
    rng = np.random.default_rng([seed, 0xFA1F])

    order = np.argsort(lab, kind="stable")
    grouped = nodes[order]
    starts = np.concatenate([[0], np.cumsum(counts)])
    cls = rng.choice(len(classes), size=n_same, p=weights / weights.sum())
    size = counts[cls]
    a = (rng.random(n_same) * size).astype(np.int64)
    b = (rng.random(n_same) * (size - 1)).astype(np.int64)
    b += b >= a
    same = np.stack([grouped[starts[cls] + a], grouped[starts[cls] + b]], axis=1)

    diff = np.zeros((0, 2), dtype=np.int64)
    while len(diff) < n_diff:
        want = 2 * (n_diff - len(diff)) + 16
        u = rng.integers(len(nodes), size=want)
        v = rng.integers(len(nodes) - 1, size=want)
        v += v >= u
        keep = lab[u] != lab[v]
        diff = np.vstack([diff, np.stack([nodes[u[keep]], nodes[v[keep]]], axis=1)])
    diff = diff[:n_diff]

    pairs = np.vstack([same.reshape(-1, 2), diff]).astype(np.int64)
    y = np.concatenate([np.ones(n_same, np.int64), np.zeros(n_diff, np.int64)])
    perm = rng.permutation(len(pairs))
    return pairs[perm], y[perm]


# --- experiment description -------------------------------------------------

class ConfigError(ValueError):
    def __init__(self, message, lineno=None, path=None):
        self.lineno = lineno
        prefix = f"{path}:" if path else ""
        if lineno is not None:
            prefix += f"line {lineno}: "
        super().__init__(prefix + message)


@dataclass(frozen=True)
class GraphSource:
    name: str
    role: str
    kind: str = "sbm"
    sbm: SbmSpec | None = None
    edges: str | None = None
    labels: str | None = None
    embeddings: str | None = None
    directed: bool = False
    weighted: bool = False
    side: int | None = None


@dataclass(frozen=True)
class ExperimentSpec:
    graphs: tuple
    task: str = "node-class"
    method: str = "rp-dotprod"
    projection: ProjectionConfig = field(default_factory=ProjectionConfig)
    train: nn.TrainConfig = field(default_factory=nn.TrainConfig)
    hidden: tuple = (128, 128)
    channels: int = 64
    conv_layers: int = 2
    kernel: str = "full"
    head: tuple = (64,)
    metric: str = "accuracy"
    seeds: tuple = (0,)
    pairs_per_node: int = 10
    diagnostic: bool = False
    holdout: float = 0.33
    threads: int = 1
    checks: tuple = ()

    def __post_init__(self):
        roles = [g.role for g in self.graphs]
        if "train" not in roles or "test" not in roles:
            raise ValueError("an experiment needs at least one train and one test graph")
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")

    @property
    def train_graphs(self):
        return [g for g in self.graphs if g.role == "train"]

    @property
    def test_graphs(self):
        return [g for g in self.graphs if g.role == "test"]


def _strip(line):
    for mark in ("#", ";"):
        if line.lstrip().startswith(mark):
            return ""
    return line.strip()


def _ints(text):
    return tuple(int(x) for x in text.replace(",", " ").split())


def _floats(text):
    return tuple(float(x) for x in text.replace(",", " ").split())


def _bool(text):
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_experiment(text, path=None, base_dir=None) -> ExperimentSpec:
    """Parse the ``key = value`` experiment format.

    Sections: ``[experiment]``, ``[projection]``, ``[model]``, ``[train]``,
    ``[checks]`` and one ``[graph NAME]`` per graph.  Relative file paths
    resolve against ``base_dir``.  Errors carry the offending line number.
    """
    sections: list[tuple[str, int, dict]] = []
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip(raw)
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError("unterminated section header", lineno, path)
            current = {}
            sections.append((line[1:-1].strip(), lineno, current))
            continue
        if "=" not in line:
            raise ConfigError(f"expected `key = value`, got {line!r}", lineno, path)
        if current is None:
            raise ConfigError("key outside of any section", lineno, path)
        key, value = (s.strip() for s in line.split("=", 1))
        if key in current:
            raise ConfigError(f"duplicate key {key!r}", lineno, path)
        current[key] = (value, lineno)

    def resolve(p):
        if p is None or base_dir is None or os.path.isabs(p):
            return p
        return os.path.join(base_dir, p)

    kwargs: dict = {}
    proj: dict = {}
    train: dict = {}
    graphs = []
    checks = []
    seen = set()

    def take(store, spec_map, section):
        for key, (value, lineno) in store.items():
            if key not in spec_map:
                raise ConfigError(f"unknown key {key!r} in [{section}]", lineno, path)
            dest, name, conv = spec_map[key]
            try:
                dest[name] = conv(value)
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"bad value for {key}: {exc}", lineno, path) from None

    for name, lineno, store in sections:
        if name in seen:
            raise ConfigError(f"duplicate section [{name}]", lineno, path)
        seen.add(name)
        if name == "experiment":
            take(store, {
                "task": (kwargs, "task", str), "method": (kwargs, "method", str),
                "metric": (kwargs, "metric", str), "seeds": (kwargs, "seeds", _ints),
                "pairs_per_node": (kwargs, "pairs_per_node", int),
                "diagnostic": (kwargs, "diagnostic", _bool),
                "holdout": (kwargs, "holdout", float),
                "threads": (kwargs, "threads", int),
            }, name)
        elif name == "projection":
            take(store, {
                "dim": (proj, "dim", int), "max_power": (proj, "max_power", int),
                "powers": (proj, "max_power", int), "init": (proj, "init", str),
                "sparsity": (proj, "sparsity", float), "beta": (proj, "beta", float),
            }, name)
        elif name == "model":
            take(store, {
                "hidden": (kwargs, "hidden", _ints), "channels": (kwargs, "channels", int),
                "conv_layers": (kwargs, "conv_layers", int), "kernel": (kwargs, "kernel", str),
                "head": (kwargs, "head", _ints),
            }, name)
        elif name == "train":
            take(store, {
                "optimizer": (train, "optimizer", str), "lr": (train, "lr", float),
                "batch_size": (train, "batch_size", int), "epochs": (train, "epochs", int),
                "val_fraction": (train, "val_fraction", float),
                "beta1": (train, "beta1", float), "beta2": (train, "beta2", float),
                "eps": (train, "eps", float),
            }, name)
        elif name == "checks":
            for key, (value, kl) in store.items():
                if key not in ("min_metric", "min_gain_over_baseline"):
                    raise ConfigError(f"unknown check {key!r}", kl, path)
                try:
                    checks.append((key, float(value)))
                except ValueError:
                    raise ConfigError(f"bad threshold {value!r}", kl, path) from None
        elif name.startswith("graph"):
            gname = name[5:].strip()
            if not gname:
                raise ConfigError("graph section needs a name: [graph NAME]", lineno, path)
            g: dict = {}
            sbm: dict = {}
            take(store, {
                "role": (g, "role", str), "source": (g, "kind", str),
                "edges": (g, "edges", str), "labels": (g, "labels", str),
                "embeddings": (g, "embeddings", str),
                "directed": (g, "directed", _bool), "weighted": (g, "weighted", _bool),
                "side": (g, "side", int),
                "blocks": (sbm, "block_sizes", _ints),
                "p_intra": (sbm, "p_intra", lambda v: (_floats(v) if "," in v or " " in v
                                                       else float(v))),
                "p_inter": (sbm, "p_inter", float), "seed": (sbm, "seed", int),
            }, name)
            if g.get("role") not in ("train", "test"):
                raise ConfigError("graph role must be train or test", lineno, path)
            kind = g.setdefault("kind", "sbm")
            try:
                if kind == "sbm":
                    g["sbm"] = SbmSpec(**sbm)
                elif kind == "edges":
                    if not g.get("edges"):
                        raise ValueError("edges source needs `edges = PATH`")
                    g["edges"] = resolve(g["edges"])
                else:
                    raise ValueError(f"unknown source {kind!r}")
            except (ValueError, TypeError) as exc:
                raise ConfigError(str(exc), lineno, path) from None
            for key in ("labels", "embeddings"):
                g[key] = resolve(g.get(key))
            graphs.append(GraphSource(name=gname, **g))
        else:
            raise ConfigError(f"unknown section [{name}]", lineno, path)

    try:
        return ExperimentSpec(graphs=tuple(graphs), projection=ProjectionConfig(**proj),
                              train=nn.TrainConfig(**train), checks=tuple(checks), **kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc), None, path) from None


def load_experiment(path) -> ExperimentSpec:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_experiment(text, path=path, base_dir=os.path.dirname(os.path.abspath(path)))


# --- running ----------------------------------------------------------------

@dataclass
class _Prepared:
    source: GraphSource
    graph: SparseGraph
    labels: np.ndarray          # over local nodes (transition rows)
    classes: list
    local_nodes: np.ndarray | None  # graph ids of local nodes, bipartite only
    transition: object


def _prepare(src: GraphSource):
    if src.kind == "sbm":
        g, labels = generate_sbm(src.sbm)
        classes = [str(c) for c in range(len(src.sbm.block_sizes))]
    else:
        g = load_edge_list(src.edges, directed=src.directed, weighted=src.weighted,
                           bipartite=src.side is not None)
        if src.labels:
            labels, classes = load_labels(src.labels, g)
            classes = [str(c) for c in classes]
        else:
            labels, classes = np.full(g.node_count, -1), []
    if src.side is not None:
        t = bipartite_square(g, src.side)
        local = t.nodes
        labels = labels[local]
    else:
        t = transition_matrix(g)
        local = None
    return _Prepared(src, g, labels, classes, local, t)


def _derive_seed(*parts):
    h = hashlib.sha256(repr(parts).encode()).digest()
    return int.from_bytes(h[:8], "little")


def _local_graph(prep):
    if prep.local_nodes is None:
        return prep.graph, None
    return prep.graph, prep.local_nodes


def _inputs(spec, prep, gi, seed, keys):
    """Model inputs for ``keys`` (local node ids, (n, 1) or (n, 2))."""
    method = spec.method
    out = {}
    if method in ("rp-dotprod", "rp-convnet", "ensemble"):
        cfg = replace(spec.projection, seed=_derive_seed("proj", seed, gi))
        degrees = None
        if cfg.beta is not None:
            degrees = np.asarray(prep.transition.matrix.astype(bool).sum(axis=1)).ravel()
        ps = propagate(prep.transition, cfg, threads=spec.threads, degrees=degrees)
        if method == "rp-convnet":
            return nn.convnet_inputs(ps, keys), ps.graph_hash
        table = (feat.rp_node_table(ps, keys[:, 0], spec.threads) if keys.shape[1] == 1
                 else feat.rp_pair_table(ps, keys, spec.threads))
        out["rp"] = table
    if method in ("igf", "ensemble"):
        g, local = _local_graph(prep)
        gk = keys if local is None else local[keys]
        table = (feat.igf_table(g, gk[:, 0]) if keys.shape[1] == 1
                 else feat.igf_pair_table(g, gk))
        table.keys = keys
        out["igf"] = table
    if method == "ri-gram":
        if not prep.source.embeddings:
            raise ValueError(f"graph {prep.source.name} has no embeddings file")
        emb = feat.load_embeddings(prep.source.embeddings, prep.graph)
        gk = keys if prep.local_nodes is None else prep.local_nodes[keys]
        out["ri"] = feat.ri_gram_table(emb, gk, use_output=bool(emb.outputs))
    tables = list(out.values())
    table = tables[0]
    for t in tables[1:]:
        table = table.hstack(t)
    return np.asarray(table.values, dtype=np.float32), prep.graph.digest()


def _samples(spec, prep, gi, seed):
    """``(keys, targets)`` in local ids for the configured task."""
    labeled = np.flatnonzero(prep.labels >= 0)
    if spec.task == "node-class":
        return labeled[:, None], prep.labels[labeled]
    pairs, same = make_pair_samples(prep.labels, spec.pairs_per_node * len(labeled),
                                    seed=_derive_seed("pairs", seed, gi))
    return pairs, same


def _build_model(spec, width, n_out, seed):
    if spec.method == "rp-convnet":
        kernel = spec.kernel if spec.kernel == "full" else int(spec.kernel)
        return nn.convnet(width, n_out, spec.channels, spec.conv_layers, spec.head,
                          kernel, seed=seed)
    return nn.mlp(width, n_out, spec.hidden, seed=seed)


def _score(spec, model, x, y, class_mask):
    if spec.task == "pair-same-class":
        _, _, logits = nn.evaluate_model(model, x, y, "binary-cross-entropy")
        return metric_auc(logits.reshape(-1), y)
    _, _, logits = nn.evaluate_model(model, x, y, "cross-entropy", class_mask=class_mask)
    pred = nn.predict_labels(logits, class_mask)
    if spec.metric == "mapped-accuracy":
        return metric_mapped_accuracy(pred, y)
    return metric_accuracy(pred, y)


@dataclass
class Report:
    """Per-graph metrics averaged over seeds plus summary rows."""

    task: str
    method: str
    metric: str
    rows: list
    per_seed: list
    errors: list
    check_failures: list

    def _table(self):
        head = ["graph", "nodes", "baseline", self.method, "std", "gain"]
        body = []
        for r in self.rows:
            body.append([r["graph"], "" if r["nodes"] is None else str(r["nodes"]),
                         _fmt(r["baseline"]), _fmt(r["value"]), _fmt(r["std"]),
                         _fmt(r["value"] - r["baseline"])])
        return head, body

    def to_markdown(self) -> str:
        head, body = self._table()
        lines = [f"# {self.method} / {self.task} ({self.metric})", "",
                 "| " + " | ".join(head) + " |",
                 "|" + "|".join("---" for _ in head) + "|"]
        lines += ["| " + " | ".join(r) + " |" for r in body]
        lines += ["", "| seed | train | validation |", "|---|---|---|"]
        lines += [f"| {s['seed']} | {_fmt(s['train'])} | {_fmt(s['val'])} |"
                  for s in self.per_seed]
        if self.errors:
            lines += ["", "Failed cells:"] + [f"- {e}" for e in self.errors]
        if self.check_failures:
            lines += ["", "Failed checks:"] + [f"- {c}" for c in self.check_failures]
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        head, body = self._table()
        w.writerow(head)
        w.writerows(body)
        return buf.getvalue()

    def digest(self) -> str:
        return hashlib.sha256(self.to_csv().encode()).hexdigest()

    def value(self, graph):
        for r in self.rows:
            if r["graph"] == graph:
                return r["value"]
        raise KeyError(graph)


def _fmt(x):
    return "nan" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.6f}"


def evaluate(spec: ExperimentSpec) -> Report:
    """Run every seed of an experiment and assemble the report.

    For each seed, every graph gets its own projection (seeded per graph),
    samples from the training graphs are pooled, ``val_fraction`` of them is
    held out for model selection, and the selected model is scored on each
    test graph.  The baseline is majority-class accuracy of the test graph
    (node task) or 0.5 AUC (pair task).  A method failing on one test graph
    leaves a NaN cell and an entry in ``errors``.
    """
    prepared = [_prepare(g) for g in spec.graphs]
    train_idx = [k for k, p in enumerate(prepared) if p.source.role == "train"]
    test_idx = [k for k, p in enumerate(prepared) if p.source.role == "test"]
    train_digests = {prepared[k].graph.digest() for k in train_idx}
    if not spec.diagnostic:
        for k in test_idx:
            if prepared[k].graph.digest() in train_digests:
                raise ValueError(f"test graph {prepared[k].source.name} also used for training")

    pair_task = spec.task == "pair-same-class"
    classes = sorted({c for p in prepared for c in p.classes})
    cindex = {c: k for k, c in enumerate(classes)}
    for p in prepared:
        remap = np.array([cindex[c] for c in p.classes] + [-1], dtype=np.int64)
        p.labels = remap[p.labels]
    n_out = 1 if pair_task else len(classes)
    loss = "binary-cross-entropy" if pair_task else "cross-entropy"

    results: dict = {}
    per_seed, errors = [], []
    for seed in spec.seeds:
        xs, ys = [], []
        holdouts = []
        for k in train_idx:
            keys, y = _samples(spec, prepared[k], k, seed)
            x, digest = _inputs(spec, prepared[k], k, seed, keys)
            if spec.diagnostic:
                rng = np.random.default_rng(_derive_seed("holdout", seed, k))
                mask = rng.random(len(y)) < spec.holdout
                holdouts.append((prepared[k].source.name + " (holdout)", x[mask], y[mask],
                                 len(prepared[k].labels)))
                x, y = x[~mask], y[~mask]
            xs.append(x)
            ys.append(y)
        x_all, y_all = np.concatenate(xs), np.concatenate(ys)
        tr, va = nn.validation_split(len(x_all), spec.train.val_fraction, seed)
        cfg = replace(spec.train, seed=seed, loss=loss)
        class_mask = None
        if not pair_task:
            class_mask = np.isin(np.arange(n_out), y_all[tr])
            if class_mask.all():
                class_mask = None
        model = _build_model(spec, x_all.shape[-1], n_out, seed)
        model, history = nn.train(model, x_all[tr], y_all[tr], cfg,
                                  x_val=x_all[va], y_val=y_all[va], class_mask=class_mask)
        per_seed.append({
            "seed": seed,
            "train": _score(spec, model, x_all[tr], y_all[tr], class_mask),
            "val": _score(spec, model, x_all[va], y_all[va], class_mask) if len(va) else float("nan"),
            "history": history,
        })
        cells = [(prepared[k].source.name, k) for k in test_idx]
        for name, x, y, nodes in holdouts:
            results.setdefault(name, {"nodes": nodes, "vals": [], "base": []})
            results[name]["vals"].append(_score(spec, model, x, y, class_mask))
            results[name]["base"].append(0.5 if pair_task else majority_baseline(y))
        for name, k in cells:
            prep = prepared[k]
            entry = results.setdefault(name, {"nodes": int((prep.labels >= 0).sum()),
                                              "vals": [], "base": []})
            try:
                keys, y = _samples(spec, prep, k, seed)
                x, _ = _inputs(spec, prep, k, seed, keys)
                entry["vals"].append(_score(spec, model, x, y, class_mask))
                entry["base"].append(0.5 if pair_task else majority_baseline(y))
            except Exception as exc:  # one failed cell must not sink the run
                entry["vals"].append(float("nan"))
                entry["base"].append(float("nan"))
                errors.append(f"seed {seed}, graph {name}: {exc}")

    rows = []
    for name, entry in results.items():
        vals = np.array(entry["vals"])
        rows.append({"graph": name, "nodes": entry["nodes"],
                     "baseline": float(np.mean(entry["base"])),
                     "value": float(np.mean(vals)),
                     "std": float(np.std(vals))})
    test_rows = [r for r in rows if not r["graph"].endswith("(holdout)")]
    if test_rows:
        sizes = np.array([r["nodes"] for r in test_rows], dtype=np.float64)
        for label, w in (("mean (equal weight)", np.ones_like(sizes)),
                         ("mean (weighted by nodes)", sizes)):
            rows.append({"graph": label, "nodes": None,
                         "baseline": float(np.average([r["baseline"] for r in test_rows], weights=w)),
                         "value": float(np.average([r["value"] for r in test_rows], weights=w)),
                         "std": float("nan")})
    failures = []
    for key, thr in spec.checks:
        for r in test_rows:
            got = r["value"] if key == "min_metric" else r["value"] - r["baseline"]
            if not got >= thr:
                failures.append(f"{key} {thr}: graph {r['graph']} has {got:.6f}")
    return Report(spec.task, spec.method, "auc" if pair_task else spec.metric,
                  rows, per_seed, errors, failures)
