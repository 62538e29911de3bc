"""Command-line entry point: ``rpgraph <command> [flags]``.

Exit codes: 0 success, 1 validation error, 2 acceptance failure
(``oracle-check``, failed experiment checks), 3 I/O error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import warnings
from dataclasses import replace

import numpy as np

from . import eval as ev
from . import features as feat
from . import neuralnet as nn
from .graph import (EdgeListError, bipartite_square, load_edge_list, load_labels,
                    transition_matrix, write_id_map)
from .rproj import (GraphDigestWarning, ProjectionConfig, ProjectionFileError,
                    load_projections, propagate, save_projections)

log = logging.getLogger("rpgraph")

OUTPUT_DIR_ENV = "RPGRAPH_OUTPUT_DIR"


class UsageError(ValueError):
    pass


class AcceptanceFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _out(args, path):
    base = args.output_dir or os.environ.get(OUTPUT_DIR_ENV)
    if base and not os.path.isabs(path):
        os.makedirs(base, exist_ok=True)
        return os.path.join(base, path)
    return path


def _dtype(args):
    return np.float64 if args.precision == "64" else np.float32


def _atomic_text(path, text):
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _load_graph(args):
    return load_edge_list(args.graph, directed=args.directed, weighted=args.weighted,
                          bipartite=args.bipartite_side is not None)


def _transition(args, g):
    if args.bipartite_side is not None:
        return bipartite_square(g, args.bipartite_side)
    return transition_matrix(g)


def cmd_project(args):
    g = _load_graph(args)
    t = _transition(args, g)
    init = "custom" if args.init == "identity" else args.init
    cfg = ProjectionConfig(dim=t.node_count if init == "custom" else args.dim,
                           max_power=args.powers, init=init, sparsity=args.sparsity,
                           beta=args.beta, seed=args.seed)
    initial = np.eye(t.node_count) if init == "custom" else None
    degrees = None
    if args.beta is not None:
        degrees = np.asarray(t.matrix.astype(bool).sum(axis=1)).ravel()
    ps = propagate(t, cfg, initial=initial, dtype=_dtype(args), threads=args.threads,
                   degrees=degrees)
    out = _out(args, args.out)
    save_projections(ps, out)
    if g.ids is not None:
        write_id_map(out + ".ids", g)
    log.info("wrote %s: %d nodes, D=%d, N=%d", out, ps.node_count, ps.dim, ps.max_power)


def _read_pairs(path):
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            parts = text.split()
            if len(parts) < 2:
                raise EdgeListError("expected `i j`", lineno, path)
            try:
                pairs.append((int(parts[0]), int(parts[1])))
            except ValueError:
                raise EdgeListError("node ids must be integers", lineno, path) from None
    return np.array(pairs, dtype=np.int64).reshape(-1, 2)


def _load_proj_checked(args, t=None):
    expected = t.source_digest if t is not None else None
    with warnings.catch_warnings():
        warnings.simplefilter("error", GraphDigestWarning)
        try:
            return load_projections(args.proj, expected_digest=expected)
        except GraphDigestWarning:
            raise UsageError(f"{args.proj} was built from a different graph than "
                             f"{args.graph}") from None


def _write_table(table, path):
    if path.endswith(".csv"):
        feat.write_csv(table, path)
    else:
        feat.save_table(table, path)


def _read_table(path):
    return feat.read_csv(path) if path.endswith(".csv") else feat.load_table(path)


def cmd_features(args):
    pairs = _read_pairs(args.pairs) if args.pairs else None
    if args.method == "rp-dotprod":
        t = _transition(args, _load_graph(args)) if args.graph else None
        ps = _load_proj_checked(args, t)
        table = (feat.rp_pair_table(ps, pairs, args.threads) if pairs is not None
                 else feat.rp_node_table(ps, threads=args.threads))
        table.provenance["input"] = ps.digest().hex()
    elif args.method == "igf":
        g = _load_graph(args)
        table = feat.igf_pair_table(g, pairs) if pairs is not None else feat.igf_table(g)
    elif args.method == "ri-gram":
        if not args.embeddings:
            raise UsageError("ri-gram needs --embeddings")
        g = _load_graph(args) if args.graph else None
        emb = feat.load_embeddings(args.embeddings, g)
        keys = pairs if pairs is not None else np.array(sorted(emb.inputs))[:, None]
        table = feat.ri_gram_table(emb, keys, use_output=bool(emb.outputs))
    else:
        raise UsageError(f"unknown method {args.method}")
    out = _out(args, args.out)
    _write_table(table, out)
    log.info("wrote %s: %d rows x %d features", out, len(table), len(table.schema))


def _targets(keys, labels, task):
    if task == "pair-same-class":
        li, lj = labels[keys[:, 0]], labels[keys[:, 1]]
        keep = (li >= 0) & (lj >= 0)
        return keep, (li == lj).astype(np.int64)
    keep = labels[keys[:, 0]] >= 0
    return keep, labels[keys[:, 0]]


def _dataset(args, header=None):
    """Inputs, targets, input digest and class names for train / eval."""
    kind = header["kind"] if header else args.model
    if kind == "convnet":
        ps = load_projections(args.proj)
        if args.pairs:
            keys = _read_pairs(args.pairs)
        else:
            keys = np.arange(ps.node_count)[:, None]
        x = nn.convnet_inputs(ps, keys)
        digest = ps.digest().hex()
    else:
        table = _read_table(args.features)
        keys, x = table.keys, np.asarray(table.values)
        digest = table.digest().hex()
    task = header["extra"]["task"] if header else args.task
    if task == "pair-same-class" and keys.shape[1] != 2:
        raise UsageError("pair task needs pair keys")
    labels, classes = load_labels(args.labels)
    if keys.max(initial=0) >= len(labels):
        labels = np.concatenate([labels, np.full(keys.max() + 1 - len(labels), -1)])
    keep, y = _targets(keys, labels, task)
    if not keep.any():
        raise UsageError("no labeled rows")
    return x[keep], y[keep], digest, [str(c) for c in classes], task


def cmd_train(args):
    x, y, digest, classes, task = _dataset(args)
    pair = task == "pair-same-class"
    n_out = 1 if pair else len(classes)
    cfg = nn.TrainConfig(optimizer=args.optimizer, lr=args.lr, batch_size=args.batch_size,
                         epochs=args.epochs, seed=args.seed,
                         loss="binary-cross-entropy" if pair else "cross-entropy",
                         val_fraction=args.val_fraction)
    if args.model == "convnet":
        model = nn.convnet(x.shape[-1], n_out, args.channels, seed=args.seed,
                           kernel="full" if args.kernel == "full" else int(args.kernel),
                           dtype=_dtype(args))
    else:
        hidden = tuple(int(h) for h in args.hidden.split(","))
        model = nn.mlp(x.shape[1], n_out, hidden, seed=args.seed, dtype=_dtype(args))
    model, history = nn.train(model, x, y, cfg)
    extra = {"task": task, "classes": classes, "input_digest": digest,
             "train_config": cfg.digest(), "val_fraction": cfg.val_fraction,
             "train_seed": cfg.seed, "best_val_metric": _best_metric(history)}
    out = _out(args, args.out)
    nn.save_model(model, out, extra)
    nn.write_history(history, _out(args, args.history or out + ".history.csv"))
    log.info("wrote %s (%d parameters)", out, model.parameter_count())


def _best_metric(history):
    best = min(history, key=lambda h: h["val_loss"])
    return best["metric"]


def cmd_eval(args):
    if args.spec:
        spec = ev.load_experiment(args.spec)
        if args.threads > 1:
            spec = replace(spec, threads=args.threads)
        report = ev.evaluate(spec)
        stem = _out(args, args.out or "report")
        _atomic_text(stem + ".md", report.to_markdown())
        _atomic_text(stem + ".csv", report.to_csv())
        print(report.to_markdown(), end="")
        if report.check_failures:
            raise AcceptanceFailure("; ".join(report.check_failures))
        return
    if not args.model:
        raise UsageError("eval needs --spec or --model")
    model, header = nn.load_model(args.model)
    x, y, digest, _, task = _dataset(args, header)
    if digest != header["extra"].get("input_digest"):
        log.warning("inputs differ from the ones the model was trained on")
    if args.split == "val":
        _, va = nn.validation_split(len(x), header["extra"]["val_fraction"],
                                    header["extra"]["train_seed"])
        x, y = x[va], y[va]
    loss = "binary-cross-entropy" if task == "pair-same-class" else "cross-entropy"
    value, metric, _ = nn.evaluate_model(model, np.asarray(x, np.float32), y, loss)
    print(json.dumps({"loss": value, "metric": metric, "rows": int(len(y))}))


def cmd_oracle_check(args):
    if args.samples < 1:
        raise UsageError("--samples must be positive")
    g = _load_graph(args)
    t = _transition(args, g)
    ps = _load_proj_checked(args, t)
    n, top = ps.node_count, ps.max_power
    rng = np.random.default_rng(args.seed)
    i = rng.integers(n, size=args.samples)
    j = rng.integers(n, size=args.samples)
    k = rng.integers(top + 1, size=args.samples)
    s = rng.integers(top + 1, size=args.samples)
    mats = ps.matrices
    est = np.einsum("nd,nd->n", mats[k, i].astype(np.float64),
                    mats[s, j].astype(np.float64)) / ps.scale
    cache = {}

    def rows(v):
        if v not in cache:
            cache[v] = feat._walk_rows(t, v, top, args.dense_cap)
        return cache[v]

    exact = np.array([rows(a)[b] @ rows(c)[d] for a, b, c, d in zip(i, k, j, s)])
    err = np.abs(est - exact)
    p99 = float(np.percentile(err, 99))
    print(f"samples={args.samples} max={err.max():.3e} mean={err.mean():.3e} p99={p99:.3e}")
    if p99 > args.tolerance:
        raise AcceptanceFailure(f"99th percentile error {p99:.3e} exceeds {args.tolerance}")


def cmd_gen_sbm(args):
    blocks = tuple(int(b) for b in args.blocks.split(","))
    p_intra = tuple(float(p) for p in args.p_intra.split(","))
    spec = ev.SbmSpec(blocks, p_intra[0] if len(p_intra) == 1 else p_intra,
                      args.p_inter, args.seed)
    g, labels = ev.generate_sbm(spec)
    coo = g.adj.tocoo()
    keep = coo.row < coo.col
    edges = "".join(f"{a}\t{b}\n" for a, b in zip(coo.row[keep], coo.col[keep]))
    out = _out(args, args.out)
    _atomic_text(out, edges)
    if args.labels:
        _atomic_text(_out(args, args.labels),
                     "".join(f"{v}\t{c}\n" for v, c in enumerate(labels)))
    log.info("wrote %s: %d nodes, %d edges", out, g.node_count, g.edge_count)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--precision", choices=("32", "64"), default="32")
    common.add_argument("--output-dir", default=None,
                        help=f"base directory for relative outputs (env {OUTPUT_DIR_ENV})")
    common.add_argument("-v", "--verbose", action="store_true")

    graph = argparse.ArgumentParser(add_help=False)
    graph.add_argument("--graph")
    graph.add_argument("--directed", action="store_true")
    graph.add_argument("--weighted", action="store_true")
    graph.add_argument("--bipartite-side", type=int, choices=(0, 1), default=None)

    p = _Parser(prog="rpgraph", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    q = sub.add_parser("project", parents=[common, graph], help="compute projections")
    q.add_argument("--dim", type=int, default=128)
    q.add_argument("--powers", type=int, default=10)
    q.add_argument("--init", choices=("gaussian", "sparse", "identity"), default="gaussian")
    q.add_argument("--sparsity", type=float, default=3.0)
    q.add_argument("--beta", type=float, default=None)
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_project, needs_graph=True)

    q = sub.add_parser("features", parents=[common, graph], help="export a feature table")
    q.add_argument("--method", choices=("rp-dotprod", "igf", "ri-gram"), required=True)
    q.add_argument("--proj")
    q.add_argument("--embeddings")
    q.add_argument("--pairs", help="file of `i j` lines; default is every node")
    q.add_argument("--out", required=True, help=".csv for CSV, anything else for FTB1")
    q.set_defaults(func=cmd_features, needs_graph=False)

    for name, func, help_ in (("train", cmd_train, "train a model"),
                              ("eval", cmd_eval, "evaluate a model or experiment")):
        q = sub.add_parser(name, parents=[common], help=help_)
        q.add_argument("--features")
        q.add_argument("--proj")
        q.add_argument("--pairs")
        q.add_argument("--labels")
        q.add_argument("--out")
        if name == "train":
            q.add_argument("--model", choices=("mlp", "convnet"), default="mlp")
            q.add_argument("--task", choices=ev.TASKS, default="node-class")
            q.add_argument("--hidden", default="128,128")
            q.add_argument("--channels", type=int, default=64)
            q.add_argument("--kernel", default="full")
            q.add_argument("--optimizer", choices=("adam", "sgd"), default="adam")
            q.add_argument("--lr", type=float, default=1e-3)
            q.add_argument("--batch-size", type=int, default=256)
            q.add_argument("--epochs", type=int, default=10)
            q.add_argument("--val-fraction", type=float, default=0.2)
            q.add_argument("--history")
        else:
            q.add_argument("--spec", help="experiment config file")
            q.add_argument("--model", help="MDL1 model file")
            q.add_argument("--split", choices=("val", "all"), default="all")
        q.set_defaults(func=func, needs_graph=False)

    q = sub.add_parser("oracle-check", parents=[common, graph],
                       help="compare projection dot products with exact values")
    q.add_argument("--proj", required=True)
    q.add_argument("--samples", type=int, default=2000)
    q.add_argument("--tolerance", type=float, default=0.05)
    q.add_argument("--dense-cap", type=int, default=feat.DEFAULT_DENSE_CAP)
    q.set_defaults(func=cmd_oracle_check, needs_graph=True)

    q = sub.add_parser("gen-sbm", parents=[common], help="write a synthetic SBM graph")
    q.add_argument("--blocks", default="150,150")
    q.add_argument("--p-intra", default="0.08")
    q.add_argument("--p-inter", type=float, default=0.01)
    q.add_argument("--out", required=True)
    q.add_argument("--labels")
    q.set_defaults(func=cmd_gen_sbm, needs_graph=False)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.needs_graph and not args.graph:
        parser.error("--graph is required")
    if args.threads < 1:
        parser.error("--threads must be positive")
    try:
        args.func(args)
    except AcceptanceFailure as exc:
        print(f"rpgraph: acceptance failure: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"rpgraph: I/O error: {exc}", file=sys.stderr)
        return 3
    except (ValueError, KeyError, IndexError, ProjectionFileError) as exc:
        print(f"rpgraph: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"rpgraph: I/O error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
