import struct

import numpy as np
import pytest

from rpgraph.graph import transition_matrix
from rpgraph.rproj import (GraphDigestWarning, MemoryBudgetError, ProjectionConfig,
                           ProjectionFileError, init_projection, load_projections,
                           propagate, propagate_from, save_projections)

from conftest import dense_transition, random_graph


def test_gaussian_moments():
    cfg = ProjectionConfig(dim=128, seed=11)
    r = init_projection(8000, cfg)  # ~10^6 entries
    sigma = np.sqrt(1 / 128)
    assert abs(r.mean()) <= 4e-3 * sigma
    assert abs(r.var() / (1 / 128) - 1) <= 0.05


def test_sparse_values_and_zero_fraction():
    cfg = ProjectionConfig(dim=100, init="sparse", sparsity=3, seed=5)
    r = init_projection(10000, cfg)
    assert set(np.unique(r)) <= {-np.sqrt(3), 0.0, np.sqrt(3)}
    assert abs((r == 0).mean() - 2 / 3) <= 0.01
    assert abs((r > 0).mean() - 1 / 6) <= 0.01


def test_entry_is_pure_function_of_seed_node_dim():
    cfg = ProjectionConfig(dim=16, seed=3)
    big = init_projection(1000, cfg, chunk=37)
    small = init_projection(10, cfg)
    np.testing.assert_array_equal(big[:10], small)
    wide = init_projection(10, ProjectionConfig(dim=32, seed=3))
    # dimension p does not depend on D except through the 1/sqrt(D) scale
    np.testing.assert_allclose(wide[:, :16] * np.sqrt(32), small * np.sqrt(16), rtol=1e-12)
    assert not np.array_equal(small, init_projection(10, ProjectionConfig(dim=16, seed=4)))


def test_degree_normalization():
    g = random_graph(30, 0.2, 1)
    deg = g.degrees()
    plain = init_projection(30, ProjectionConfig(dim=8, seed=1))
    scaled = init_projection(30, ProjectionConfig(dim=8, seed=1, beta=-0.9), degrees=deg)
    m = g.edge_count
    factor = (np.maximum(deg, 1) / (2 * m)) ** -0.9
    np.testing.assert_allclose(scaled, plain * factor[:, None], rtol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_identity_gives_exact_powers(seed):
    g = random_graph(40, 0.1, seed)
    t = transition_matrix(g)
    ps = propagate(t, ProjectionConfig(max_power=6), initial=np.eye(40), dtype=np.float64)
    a = dense_transition(g)
    for k in range(7):
        assert np.abs(ps.matrices[k] - np.linalg.matrix_power(a, k)).max() <= 1e-12


def test_path_two_step(path3):
    t = transition_matrix(path3)
    ps = propagate(t, ProjectionConfig(max_power=2), initial=np.eye(3), dtype=np.float64)
    np.testing.assert_array_equal(ps.matrices[2][0], [0.5, 0, 0.5])


def test_zero_power(k3):
    ps = propagate(transition_matrix(k3), ProjectionConfig(dim=4, max_power=0))
    assert ps.matrices.shape == (1, 3, 4)


def test_linearity():
    g = random_graph(25, 0.2, 9)
    t = transition_matrix(g)
    rng = np.random.default_rng(0)
    r1, r2 = rng.standard_normal((2, 25, 6))
    f = lambda r: propagate_from(t.matrix, r, 5)
    np.testing.assert_allclose(f(2.5 * r1 - 0.7 * r2), 2.5 * f(r1) - 0.7 * f(r2), atol=1e-9)


def test_constant_columns_preserved():
    g = random_graph(25, 0.2, 9)
    t = transition_matrix(g)
    c = np.array([1.0, -2.0, 0.5])
    out = propagate_from(t.matrix, np.tile(c, (25, 1)), 8)
    np.testing.assert_allclose(out, np.broadcast_to(c, out.shape), atol=1e-12)


def test_chain_consistency():
    g = random_graph(50, 0.1, 2)
    t = transition_matrix(g)
    ps = propagate(t, ProjectionConfig(dim=16, max_power=5), dtype=np.float64)
    for k in range(1, 6):
        assert np.abs(t.matrix @ ps.matrices[k - 1] - ps.matrices[k]).max() <= 1e-9


def test_threads_do_not_change_results():
    g = random_graph(500, 0.02, 4)
    t = transition_matrix(g)
    cfg = ProjectionConfig(dim=32, max_power=4, seed=8)
    one = propagate(t, cfg, threads=1)
    four = propagate(t, cfg, threads=4)
    assert one.matrices.tobytes() == four.matrices.tobytes()


def test_memory_budget(k3):
    cfg = ProjectionConfig(dim=128, max_power=10)
    with pytest.raises(MemoryBudgetError) as err:
        propagate(transition_matrix(k3), cfg, memory_budget=1000)
    assert err.value.required == 11 * 3 * 128 * 4


def test_config_validation():
    with pytest.raises(ValueError):
        ProjectionConfig(dim=0)
    with pytest.raises(ValueError):
        ProjectionConfig(max_power=-1)
    with pytest.raises(ValueError):
        ProjectionConfig(init="sparse", sparsity=0.5)


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_save_load_roundtrip(tmp_path, dtype):
    g = random_graph(30, 0.2, 1)
    t = transition_matrix(g)
    cfg = ProjectionConfig(dim=8, max_power=3, init="sparse", sparsity=2.5, beta=-0.9, seed=77)
    ps = propagate(t, cfg, dtype=dtype, degrees=g.degrees())
    save_projections(ps, tmp_path / "p.rpj")
    back = load_projections(tmp_path / "p.rpj", expected_digest=g.digest())
    assert back.matrices.dtype == dtype
    assert back.matrices.tobytes() == ps.matrices.tobytes()
    assert back.config == cfg
    assert back.graph_hash == g.digest()


def test_truncated_file(tmp_path, k3):
    ps = propagate(transition_matrix(k3), ProjectionConfig(dim=4, max_power=2))
    p = tmp_path / "p.rpj"
    save_projections(ps, p)
    p.write_bytes(p.read_bytes()[:-1])
    with pytest.raises(ProjectionFileError, match="truncated"):
        load_projections(p)


def test_bad_magic_and_version(tmp_path, k3):
    ps = propagate(transition_matrix(k3), ProjectionConfig(dim=4, max_power=1))
    p = tmp_path / "p.rpj"
    save_projections(ps, p)
    blob = p.read_bytes()
    p.write_bytes(b"XXXX" + blob[4:])
    with pytest.raises(ProjectionFileError, match="magic"):
        load_projections(p)
    p.write_bytes(blob[:4] + struct.pack("<H", 9) + blob[6:])
    with pytest.raises(ProjectionFileError, match="version"):
        load_projections(p)


def test_digest_mismatch_warns(tmp_path, k3, path3):
    ps = propagate(transition_matrix(k3), ProjectionConfig(dim=4, max_power=1))
    save_projections(ps, tmp_path / "p.rpj")
    with pytest.warns(GraphDigestWarning):
        back = load_projections(tmp_path / "p.rpj", expected_digest=path3.digest())
    assert back.matrices.shape == (2, 3, 4)


def test_header_layout(tmp_path, k3):
    cfg = ProjectionConfig(dim=5, max_power=2, seed=123)
    ps = propagate(transition_matrix(k3), cfg)
    save_projections(ps, tmp_path / "p.rpj")
    blob = (tmp_path / "p.rpj").read_bytes()
    magic, version, flags, n, d, power, seed = struct.unpack_from("<4sHHQIIQ", blob)
    assert (magic, version, flags, n, d, power, seed) == (b"RPJ1", 1, 0, 3, 5, 2, 123)
    payload = np.frombuffer(blob[-3 * 3 * 5 * 4:], "<f4").reshape(3, 3, 5)
    np.testing.assert_array_equal(payload, ps.matrices)
