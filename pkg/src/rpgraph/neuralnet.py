"""Small numpy networks with hand-written backward passes.

Two model shapes are used downstream:

* a fully connected classifier over feature tables (``mlp``);
* the projection ConvNet (``convnet``): a row transform shared by all D
  projection dimensions, mean over dimensions, then a dense head.

Inputs to the ConvNet are (batch, D, W) arrays with ``W = N+1`` for nodes
and ``2(N+1)`` for pairs (see ``build_convnet_input``).
"""
from __future__ import annotations

import copy
import hashlib
import json
import os
import struct
from dataclasses import asdict, dataclass

import numpy as np

from .metrics import metric_accuracy, metric_auc
from .rproj import ProjectionSet

__all__ = [
    "Dense", "RowConv", "SlidingRowConv", "ReLU", "MeanRows", "SortRows",
    "Standardize", "Model", "TrainConfig", "NonFiniteLossError",
    "mlp", "convnet", "build_convnet_input", "convnet_inputs",
    "softmax_cross_entropy", "binary_cross_entropy", "train",
    "save_model", "load_model",
]


class NonFiniteLossError(FloatingPointError):
    pass


class Layer:
    kind = "layer"

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}

    def config(self) -> dict:
        return {}

    def astype(self, dtype):
        for store in (self.params, self.buffers):
            for k in store:
                store[k] = store[k].astype(dtype)
        return self


class Dense(Layer):
    """Affine map over the last axis; ``weight`` is (out, in)."""

    kind = "dense"

    def __init__(self, n_in, n_out, rng=None, dtype=np.float32):
        super().__init__()
        rng = np.random.default_rng(0) if rng is None else rng
        self.n_in, self.n_out = n_in, n_out
        scale = np.sqrt(2.0 / n_in)
        self.params["weight"] = (rng.standard_normal((n_out, n_in)) * scale).astype(dtype)
        self.params["bias"] = np.zeros(n_out, dtype=dtype)

    def config(self):
        return {"n_in": self.n_in, "n_out": self.n_out}

    def forward(self, x):
        self._x = x
        return x @ self.params["weight"].T + self.params["bias"]

    def backward(self, g):
        x2 = self._x.reshape(-1, self.n_in)
        g2 = g.reshape(-1, self.n_out)
        self.grads["weight"] = g2.T @ x2
        self.grads["bias"] = g2.sum(axis=0)
        return g @ self.params["weight"]


class RowConv(Dense):
    """1-D convolution whose kernel spans the whole row.

    Applied to (batch, D, W) input it maps every projection dimension's row
    of length W to M channels with the same weights.
    """

    kind = "rowconv"


class SlidingRowConv(Layer):
    """Width-``kernel`` stride-1 convolution along each row, then flatten.

    (batch, D, L) -> (batch, D, (L - kernel + 1) * channels).
    """

    kind = "slidingconv"

    def __init__(self, length, channels, kernel=3, rng=None, dtype=np.float32):
        super().__init__()
        if kernel > length:
            raise ValueError(f"kernel {kernel} longer than row {length}")
        rng = np.random.default_rng(0) if rng is None else rng
        self.length, self.channels, self.kernel = length, channels, kernel
        scale = np.sqrt(2.0 / kernel)
        self.params["weight"] = (rng.standard_normal((channels, kernel)) * scale).astype(dtype)
        self.params["bias"] = np.zeros(channels, dtype=dtype)

    @property
    def n_out(self):
        return (self.length - self.kernel + 1) * self.channels

    def config(self):
        return {"length": self.length, "channels": self.channels, "kernel": self.kernel}

    def forward(self, x):
        win = np.lib.stride_tricks.sliding_window_view(x, self.kernel, axis=-1)
        self._win = win
        self._shape = x.shape
        y = win @ self.params["weight"].T + self.params["bias"]
        return y.reshape(*x.shape[:-1], self.n_out)

    def backward(self, g):
        steps = self.length - self.kernel + 1
        g = g.reshape(*self._shape[:-1], steps, self.channels)
        self.grads["weight"] = (g.reshape(-1, self.channels).T
                                @ self._win.reshape(-1, self.kernel))
        self.grads["bias"] = g.reshape(-1, self.channels).sum(axis=0)
        gw = g @ self.params["weight"]
        gx = np.zeros(self._shape, dtype=gw.dtype)
        for t in range(self.kernel):
            gx[..., t:t + steps] += gw[..., t]
        return gx


class ReLU(Layer):
    kind = "relu"

    def forward(self, x):
        self._mask = x > 0
        return np.where(self._mask, x, 0).astype(x.dtype)

    def backward(self, g):
        return np.where(self._mask, g, 0).astype(g.dtype)


class MeanRows(Layer):
    """Average over the projection-dimension axis: (B, D, M) -> (B, M)."""

    kind = "meanrows"

    def forward(self, x):
        self._d = x.shape[1]
        return x.mean(axis=1)

    def backward(self, g):
        return np.repeat(g[:, None, :] / g.dtype.type(self._d), self._d, axis=1)


class SortRows(Layer):
    """Put the D rows of each sample in lexicographic order.

    The network is a set function of the rows, so this changes nothing
    mathematically; it makes outputs bit-identical under any permutation of
    the projection dimensions, independent of floating-point summation
    order.
    """

    kind = "sortrows"

    def forward(self, x):
        order = np.empty(x.shape[:2], dtype=np.int64)
        for b in range(x.shape[0]):
            order[b] = np.lexsort(x[b].T[::-1])
        self._order = order
        return np.take_along_axis(x, order[:, :, None], axis=1)

    def backward(self, g):
        gx = np.empty_like(g)
        np.put_along_axis(gx, self._order[:, :, None], g, axis=1)
        return gx


class Standardize(Layer):
    """Fixed z-scoring with statistics fitted on training rows."""

    kind = "standardize"

    def __init__(self, n_features, dtype=np.float32):
        super().__init__()
        self.n_features = n_features
        self.buffers["mean"] = np.zeros(n_features, dtype=dtype)
        self.buffers["scale"] = np.ones(n_features, dtype=dtype)

    def config(self):
        return {"n_features": self.n_features}

    def fit(self, x):
        x = np.asarray(x, dtype=np.float64)
        sd = x.std(axis=0)
        dtype = self.buffers["mean"].dtype
        self.buffers["mean"] = x.mean(axis=0).astype(dtype)
        self.buffers["scale"] = np.where(sd > 1e-12, 1.0 / np.where(sd > 1e-12, sd, 1.0),
                                         1.0).astype(dtype)

    def forward(self, x):
        return (x - self.buffers["mean"]) * self.buffers["scale"]

    def backward(self, g):
        return g * self.buffers["scale"]


_LAYERS = {cls.kind: cls for cls in (Dense, RowConv, SlidingRowConv, ReLU, MeanRows,
                                     SortRows, Standardize)}


class Model:
    """A layer stack ending in logits (``n_out`` classes, or 1 score)."""

    def __init__(self, layers, kind, n_out, dtype=np.float32, seed=0):
        self.layers = list(layers)
        self.kind = kind
        self.n_out = n_out
        self.dtype = np.dtype(dtype)
        self.seed = seed

    def forward(self, x):
        x = np.asarray(x, dtype=self.dtype)
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, g):
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return g

    __call__ = forward

    def parameters(self):
        """``(name, array)`` for every trainable tensor, in a fixed order."""
        return [(f"{i}.{layer.kind}.{k}", layer.params[k])
                for i, layer in enumerate(self.layers) for k in sorted(layer.params)]

    def gradients(self):
        return [layer.grads[k] for layer in self.layers for k in sorted(layer.params)]

    def set_parameters(self, arrays):
        it = iter(arrays)
        for layer in self.layers:
            for k in sorted(layer.params):
                layer.params[k] = next(it)

    def parameter_count(self):
        return int(sum(a.size for _, a in self.parameters()))

    def digest(self) -> bytes:
        h = hashlib.sha256(self.kind.encode())
        for layer in self.layers:
            for store in (layer.params, layer.buffers):
                for k in sorted(store):
                    h.update(np.ascontiguousarray(store[k]).tobytes())
        return h.digest()

    def astype(self, dtype):
        self.dtype = np.dtype(dtype)
        for layer in self.layers:
            layer.astype(dtype)
        return self

    def standardizer(self):
        first = self.layers[0] if self.layers else None
        return first if isinstance(first, Standardize) else None


def mlp(n_in, n_out, hidden=(128, 128), standardize=True, seed=0, dtype=np.float32):
    """Fully connected ReLU classifier over a feature vector."""
    rng = np.random.default_rng(seed)
    layers = [Standardize(n_in, dtype)] if standardize else []
    width = n_in
    for h in hidden:
        layers += [Dense(width, h, rng, dtype), ReLU()]
        width = h
    layers.append(Dense(width, n_out, rng, dtype))
    return Model(layers, "mlp", n_out, dtype, seed)


def convnet(width, n_out, channels=64, conv_layers=2, head=(64,), kernel="full",
            seed=0, dtype=np.float32):
    """Row transform (``conv_layers`` convolutions with ``channels`` outputs
    and ReLU) shared across dimensions, mean over dimensions, dense head.

    ``kernel="full"`` uses row-spanning kernels; ``kernel=3`` (or any int)
    starts with a sliding convolution of that width.
    """
    rng = np.random.default_rng(seed)
    layers = [SortRows()]
    cur = width
    for c in range(conv_layers):
        if c == 0 and kernel != "full":
            conv = SlidingRowConv(width, channels, int(kernel), rng, dtype)
            layers += [conv, ReLU()]
            cur = conv.n_out
        else:
            layers += [RowConv(cur, channels, rng, dtype), ReLU()]
            cur = channels
    layers.append(MeanRows())
    for h in head:
        layers += [Dense(cur, h, rng, dtype), ReLU()]
        cur = h
    layers.append(Dense(cur, n_out, rng, dtype))
    return Model(layers, "convnet", n_out, dtype, seed)


def build_convnet_input(ps: ProjectionSet, i, j=None) -> np.ndarray:
    """``X[p, k] = R[k]_{i,p}`` (D x (N+1)); for pairs ``[X_i | X_j]``."""
    n = ps.node_count
    for v in (i,) if j is None else (i, j):
        if not 0 <= v < n:
            raise IndexError(f"node {v} outside [0, {n})")
    x = ps.matrices[:, i, :].T
    if j is None:
        return np.ascontiguousarray(x)
    return np.hstack([x, ps.matrices[:, j, :].T])


def convnet_inputs(ps: ProjectionSet, keys) -> np.ndarray:
    """Stacked ConvNet inputs for node ids (n,) / (n, 1) or pairs (n, 2)."""
    keys = np.asarray(keys, dtype=np.int64)
    keys = keys.reshape(len(keys), -1)
    if keys.size and (keys.min() < 0 or keys.max() >= ps.node_count):
        raise IndexError("node id outside projection set")
    parts = [ps.matrices[:, keys[:, c], :].transpose(1, 2, 0) for c in range(keys.shape[1])]
    return np.ascontiguousarray(np.concatenate(parts, axis=2))


# --- losses -----------------------------------------------------------------

def _check_finite(loss, where):
    if not np.isfinite(loss):
        raise NonFiniteLossError(f"non-finite loss {loss} {where}")


def softmax_cross_entropy(logits, labels, class_mask=None):
    """Mean cross-entropy and its gradient w.r.t. ``logits``.

    Classes with ``class_mask == False`` are removed from the softmax, so
    their logits get zero gradient.
    """
    z = np.asarray(logits, dtype=np.float64)
    if class_mask is not None:
        z = np.where(np.asarray(class_mask, bool)[None, :], z, -np.inf)
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    n = len(labels)
    loss = -logp[np.arange(n), labels].mean()
    p = np.exp(logp)
    p[np.arange(n), labels] -= 1.0
    return loss, (p / n).astype(logits.dtype)


def binary_cross_entropy(logits, labels):
    """Mean logistic loss of a single score column against 0/1 labels."""
    z = np.asarray(logits, dtype=np.float64).reshape(-1)
    y = np.asarray(labels, dtype=np.float64)
    loss = (np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z)))).mean()
    sig = 0.5 * (1.0 + np.tanh(0.5 * z))
    grad = ((sig - y) / len(y)).reshape(np.shape(logits))
    return loss, grad.astype(logits.dtype)


def _loss(name, logits, labels, class_mask=None):
    if name == "cross-entropy":
        return softmax_cross_entropy(logits, labels, class_mask)
    if name == "binary-cross-entropy":
        return binary_cross_entropy(logits, labels)
    raise ValueError(f"unknown loss {name!r}")


# --- training ---------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 256
    epochs: int = 10
    seed: int = 0
    loss: str = "cross-entropy"
    val_fraction: float = 0.2

    def __post_init__(self):
        if self.lr <= 0 or self.batch_size < 1 or self.epochs < 1:
            raise ValueError("learning rate, batch size and epochs must be positive")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if not 0 <= self.val_fraction < 1:
            raise ValueError("val_fraction must lie in [0, 1)")

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()


class _Adam:
    def __init__(self, params, cfg):
        self.cfg = cfg
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        c = self.cfg
        self.t += 1
        b1, b2 = c.beta1, c.beta2
        out = []
        for k, (p, g) in enumerate(zip(params, grads)):
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            mhat = self.m[k] / (1 - b1 ** self.t)
            vhat = self.v[k] / (1 - b2 ** self.t)
            out.append((p - c.lr * mhat / (np.sqrt(vhat) + c.eps)).astype(p.dtype))
        return out


class _SGD:
    def __init__(self, params, cfg):
        self.cfg = cfg

    def step(self, params, grads):
        return [(p - self.cfg.lr * g).astype(p.dtype) for p, g in zip(params, grads)]


def validation_split(n, fraction, seed):
    """Seeded ``(train_idx, val_idx)`` split of ``range(n)``."""
    rng = np.random.default_rng([seed, 0x5EED])
    perm = rng.permutation(n)
    n_val = int(round(fraction * n))
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def evaluate_model(model, x, y, loss, batch_size=1024, class_mask=None):
    """``(loss, metric, scores)`` over a dataset without updating weights."""
    outs = [model.forward(x[s:s + batch_size]) for s in range(0, len(x), batch_size)]
    logits = np.concatenate(outs) if outs else np.zeros((0, model.n_out), model.dtype)
    value, _ = _loss(loss, logits, y, class_mask)
    if loss == "cross-entropy":
        metric = metric_accuracy(predict_labels(logits, class_mask), y)
    else:
        y = np.asarray(y)
        metric = (metric_auc(logits.reshape(-1), y)
                  if 0 < y.sum() < len(y) else float("nan"))
    return float(value), float(metric), logits


def predict_labels(logits, class_mask=None):
    z = np.asarray(logits, dtype=np.float64)
    if class_mask is not None:
        z = np.where(np.asarray(class_mask, bool)[None, :], z, -np.inf)
    return z.argmax(axis=1)


def train(model: Model, x, y, config: TrainConfig, x_val=None, y_val=None,
          class_mask=None):
    """Minibatch training with best-validation-loss model selection.

    Without explicit validation data, ``config.val_fraction`` of the rows
    are held out (seeded).  A leading ``Standardize`` layer is fitted on the
    training rows.  Returns ``(best_model, history)`` where ``history`` has
    one dict per epoch with ``epoch, train_loss, val_loss, metric``.
    """
    x = np.asarray(x, dtype=model.dtype)
    y = np.asarray(y)
    if len(x) == 0:
        raise ValueError("empty training set")
    if config.loss == "cross-entropy":
        if y.min() < 0 or y.max() >= model.n_out:
            raise ValueError(f"labels must lie in [0, {model.n_out})")
    elif not np.isin(y, (0, 1)).all():
        raise ValueError("binary labels must be 0 or 1")
    if x_val is None and config.val_fraction > 0:
        tr, va = validation_split(len(x), config.val_fraction, config.seed)
        x, y, x_val, y_val = x[tr], y[tr], x[va], y[va]
    if x_val is not None:
        x_val = np.asarray(x_val, dtype=model.dtype)
        y_val = np.asarray(y_val)

    std = model.standardizer()
    if std is not None:
        std.fit(x)

    params = [p for _, p in model.parameters()]
    opt = (_Adam if config.optimizer == "adam" else _SGD)(params, config)
    rng = np.random.default_rng([config.seed, 0xBA7C4])
    best, best_loss, history = copy.deepcopy(model), np.inf, []
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(x))
        losses, sizes = [], []
        for s in range(0, len(x), config.batch_size):
            idx = order[s:s + config.batch_size]
            logits = model.forward(x[idx])
            value, grad = _loss(config.loss, logits, y[idx], class_mask)
            _check_finite(value, f"at epoch {epoch}, batch starting {s}")
            model.backward(grad)
            grads = model.gradients()
            if not all(np.isfinite(g).all() for g in grads):
                raise NonFiniteLossError(f"non-finite gradient at epoch {epoch}, "
                                         f"batch starting {s}")
            params = opt.step(params, grads)
            model.set_parameters(params)
            losses.append(value)
            sizes.append(len(idx))
        train_loss = float(np.average(losses, weights=sizes))
        if x_val is not None and len(x_val):
            val_loss, metric, _ = evaluate_model(model, x_val, y_val, config.loss,
                                                 class_mask=class_mask)
        else:
            val_loss, metric = train_loss, float("nan")
        history.append({"epoch": epoch, "train_loss": train_loss,
                        "val_loss": val_loss, "metric": metric})
        if val_loss < best_loss:
            best_loss = val_loss
            best = copy.deepcopy(model)
    return best, history


def write_history(history, path):
    lines = ["epoch,train_loss,val_loss,metric"]
    lines += [f"{h['epoch']},{h['train_loss']!r},{h['val_loss']!r},{h['metric']!r}"
              for h in history]
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)


# --- model files ------------------------------------------------------------

MDL_MAGIC = b"MDL1"


def save_model(model: Model, path, extra=None):
    """MDL1: magic, u32 header length, JSON header, f32 parameter blocks.

    The header lists the model kind, layer configs, every block's name and
    shape, the seed, and ``extra`` (e.g. config and input digests).
    """
    blocks = []
    for i, layer in enumerate(model.layers):
        for store_name, store in (("params", layer.params), ("buffers", layer.buffers)):
            for k in sorted(store):
                blocks.append((f"{i}.{store_name}.{k}", store[k]))
    header = {
        "kind": model.kind, "n_out": model.n_out, "seed": model.seed,
        "layers": [{"type": layer.kind, **layer.config()} for layer in model.layers],
        "blocks": [{"name": n, "shape": list(a.shape)} for n, a in blocks],
        "extra": extra or {},
    }
    head = json.dumps(header, sort_keys=True).encode()
    payload = b"".join(np.asarray(a, dtype="<f4").tobytes() for _, a in blocks)
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(MDL_MAGIC + struct.pack("<I", len(head)) + head + payload)
    os.replace(tmp, path)


def load_model(path):
    """Returns ``(model, header)``."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MDL_MAGIC:
        raise ValueError(f"{path}: not an MDL1 model file")
    (hlen,) = struct.unpack_from("<I", blob, 4)
    header = json.loads(blob[8:8 + hlen])
    layers = []
    for spec in header["layers"]:
        spec = dict(spec)
        cls = _LAYERS[spec.pop("type")]
        layer = cls.__new__(cls)
        Layer.__init__(layer)
        for k, v in spec.items():
            setattr(layer, k, v)
        layers.append(layer)
    off = 8 + hlen
    for block in header["blocks"]:
        idx, store, name = block["name"].split(".")
        count = int(np.prod(block["shape"], dtype=np.int64))
        arr = np.frombuffer(blob, "<f4", count, off).reshape(block["shape"]).astype(np.float32)
        off += count * 4
        getattr(layers[int(idx)], store)[name] = arr
    if off != len(blob):
        raise ValueError(f"{path}: size mismatch")
    model = Model(layers, header["kind"], header["n_out"], np.float32, header["seed"])
    return model, header
