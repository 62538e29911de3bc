import numpy as np
import pytest

from rpgraph.graph import SparseGraph


def random_graph(n, p, seed, weighted=False):
    """Erdos-Renyi G(n, p), built independently of the package generators."""
    rng = np.random.default_rng(seed)
    iu = np.triu_indices(n, 1)
    keep = rng.random(len(iu[0])) < p
    w = rng.uniform(0.5, 2.0, keep.sum()) if weighted else None
    return SparseGraph.from_edges(n, iu[0][keep], iu[1][keep], w)


def dense_transition(g):
    """Row-normalized dense adjacency, self-loop on empty rows."""
    a = g.adj.toarray()
    out = np.zeros_like(a)
    for i in range(len(a)):
        s = a[i].sum()
        if s > 0:
            out[i] = a[i] / s
        else:
            out[i, i] = 1.0
    return out


def write_lines(path, lines):
    path.write_text("".join(f"{line}\n" for line in lines))
    return path


@pytest.fixture
def k3():
    return SparseGraph.from_edges(3, [0, 1, 0], [1, 2, 2])


@pytest.fixture
def path3():
    return SparseGraph.from_edges(3, [0, 1], [1, 2])


@pytest.fixture
def k4():
    iu = np.triu_indices(4, 1)
    return SparseGraph.from_edges(4, *iu)


@pytest.fixture
def c5():
    return SparseGraph.from_edges(5, np.arange(5), (np.arange(5) + 1) % 5)


def finite_difference_error(model, x, loss_fn, step=1e-5):
    """Largest relative error between analytic and central-difference
    gradients over the input and every parameter tensor of ``model``.

    ``loss_fn(output) -> (loss, d loss / d output)``.
    """
    def loss_at():
        return loss_fn(model.forward(x))[0]

    _, g = loss_fn(model.forward(x))
    gx = model.backward(g)
    analytic = [gx] + [a.copy() for a in model.gradients()]
    targets = [x] + [p for _, p in model.parameters()]
    worst = 0.0
    for arr, ana in zip(targets, analytic):
        num = np.zeros_like(arr)
        flat = arr.reshape(-1)
        for idx in range(flat.size):
            keep = flat[idx]
            flat[idx] = keep + step
            up = loss_at()
            flat[idx] = keep - step
            down = loss_at()
            flat[idx] = keep
            num.reshape(-1)[idx] = (up - down) / (2 * step)
        scale = max(np.linalg.norm(ana), np.linalg.norm(num), 1e-8)
        worst = max(worst, np.linalg.norm(ana - num) / scale)
    return worst


def weighted_sum_loss(weights):
    return lambda out: (float(np.sum(weights * out)), weights)


LAYER_KINDS = ["dense", "rowconv", "slidingconv", "relu", "meanrows", "sortrows",
               "standardize"]


def layer_case(kind, rng):
    """A 64-bit one-layer model of ``kind`` with random shapes, plus an input."""
    from rpgraph.neuralnet import (Dense, MeanRows, Model, ReLU, RowConv, SlidingRowConv,
                                   SortRows, Standardize)
    b, d, w = (int(v) for v in rng.integers(2, 6, size=3))
    w += 2
    lrng = np.random.default_rng(int(rng.integers(2**31)))
    if kind == "dense":
        layer, x = Dense(w, int(rng.integers(1, 6)), lrng, np.float64), rng.standard_normal((b, w))
    elif kind == "rowconv":
        layer = RowConv(w, int(rng.integers(1, 6)), lrng, np.float64)
        x = rng.standard_normal((b, d, w))
    elif kind == "slidingconv":
        layer = SlidingRowConv(w, int(rng.integers(1, 4)), int(rng.integers(1, w + 1)),
                               lrng, np.float64)
        x = rng.standard_normal((b, d, w))
    elif kind == "relu":
        layer = ReLU()
        x = rng.standard_normal((b, d, w))
        x[np.abs(x) < 1e-3] = 0.5         # keep away from the kink
    elif kind == "meanrows":
        layer, x = MeanRows(), rng.standard_normal((b, d, w))
    elif kind == "sortrows":
        layer, x = SortRows(), rng.standard_normal((b, d, w))
    elif kind == "standardize":
        layer = Standardize(w, np.float64)
        layer.fit(rng.standard_normal((10, w)) * 3 + 1)
        x = rng.standard_normal((b, w))
    for k in layer.params:
        layer.params[k] = layer.params[k] + rng.standard_normal(layer.params[k].shape) * 0.1
    return Model([layer], kind, 1, np.float64), x


def layer_gradient_error(kind, seed):
    rng = np.random.default_rng(seed)
    model, x = layer_case(kind, rng)
    weights = rng.standard_normal(model.forward(x).shape)
    return finite_difference_error(model, x, weighted_sum_loss(weights))


ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """``acceptance(number, title, ok, detail)`` records one criterion line
    for the end-of-run summary and fails the test when ``ok`` is false."""
    lines = request.config.stash.setdefault(ACCEPTANCE_KEY, [])

    def record(number, title, ok, detail):
        lines.append((number, f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"))
        assert ok, f"criterion {number} failed: {detail}"

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
