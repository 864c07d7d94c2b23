import csv
from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spatial_fh.errors import GraphError, NumericalError
from spatial_fh.spatial_graph import (CholeskyFactor, PencilFactor, build_graph, icar_quadform,
                                      sample_constrained_gmrf)


def test_path_graph_structure(path3):
    np.testing.assert_array_equal(path3.structure, [[1, -1, 0], [-1, 2, -1], [0, -1, 1]])


def test_complete_graph_degrees():
    g = build_graph(3, [(0, 1), (1, 2), (0, 2)])
    np.testing.assert_array_equal(g.w_plus, [2, 2, 2])


def test_structure_annihilates_ones(eastern):
    assert not np.any(eastern.structure @ np.ones(eastern.n, dtype=np.int64))
    w = eastern.W
    assert np.array_equal(w, w.T) and not np.any(np.diag(w))
    assert set(np.unique(w)) <= {0, 1}


def test_shipped_graph_connected_by_bfs(fixture_dir, eastern):
    with open(fixture_dir / "adjacency.csv", newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    nbrs = {}
    for a, b in rows:
        nbrs.setdefault(a, set()).add(b)
        nbrs.setdefault(b, set()).add(a)
    start = next(iter(nbrs))
    seen, queue = {start}, deque([start])
    while queue:
        for m in nbrs[queue.popleft()]:
            if m not in seen:
                seen.add(m)
                queue.append(m)
    assert len(seen) == 21 == eastern.n
    assert eastern.neighbors(eastern.area_ids.index("DC")) == [eastern.area_ids.index("MD")]


def test_rank_n_minus_one(eastern):
    e = np.linalg.eigvalsh(eastern.structure.astype(float))
    assert abs(e[0]) < 1e-10 and e[1] > 1e-8


def test_graph_errors():
    with pytest.raises(GraphError, match="disconnected"):
        build_graph(4, [(0, 1), (2, 3)])
    with pytest.raises(GraphError, match="isolated"):
        build_graph(3, [(0, 1)])
    with pytest.raises(GraphError, match="self-loop"):
        build_graph(2, [(0, 0), (0, 1)])
    with pytest.raises(GraphError, match="out of range"):
        build_graph(2, [(0, 2)])


def test_quadform_examples(path3):
    assert icar_quadform(path3, [1.0, 1.0, 1.0]) == 0.0
    u = np.array([1.0, 0.0, -1.0])
    assert icar_quadform(path3, u) == pytest.approx(2.0)
    assert icar_quadform(path3, u) == pytest.approx(u @ path3.structure @ u)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=21, max_size=21), st.floats(-100, 100))
def test_quadform_shift_invariant(eastern, u, c):
    u = np.array(u)
    a, b = icar_quadform(eastern, u), icar_quadform(eastern, u + c)
    assert a >= 0
    assert b == pytest.approx(a, rel=1e-9, abs=1e-6)


def test_zero_mean_draws_centered(eastern, rng):
    q = np.diag(rng.uniform(1, 10, 21)) + eastern.structure
    draws = sample_constrained_gmrf(q, np.zeros(21), rng, size=100_000)
    se = draws.std(axis=0) / np.sqrt(draws.shape[0])
    assert np.all(np.abs(draws.mean(axis=0)) < 4 * se)


def test_constrained_draw_sums_to_zero(eastern, rng):
    q = np.diag(rng.uniform(100, 1000, 21)) + 3.0 * eastern.structure
    for _ in range(20):
        u = sample_constrained_gmrf(q, rng.standard_normal(21), rng)
        assert abs(u.sum()) < 1e-10


def test_two_dim_projection_variance(rng):
    # N(0, I) projected on u1 + u2 = 0 has Var(u1) = 1/2
    draws = sample_constrained_gmrf(np.eye(2), np.zeros(2), rng, size=1_000_000)
    assert draws[:, 0].var() == pytest.approx(0.5, rel=0.01)
    np.testing.assert_allclose(draws.sum(axis=1), 0, atol=1e-12)


def _subspace_oracle(q, b):
    """Mean/cov of N(Q^-1 b, Q^-1) | 1'u = 0, via an orthonormal basis of 1-perp."""
    n = q.shape[0]
    basis = np.linalg.svd(np.eye(n) - 1.0 / n)[0][:, : n - 1]
    p = basis.T @ q @ basis
    cov_v = np.linalg.inv(p)
    mean_v = cov_v @ basis.T @ b
    return basis @ mean_v, basis @ cov_v @ basis.T


def test_constrained_matches_subspace_oracle(path3, rng):
    q = np.eye(3) + path3.structure
    b = np.array([1.0, 0.0, -1.0])
    mean, cov = _subspace_oracle(q, b)
    draws = sample_constrained_gmrf(q, b, rng, size=1_000_000)
    se = np.sqrt(np.diag(cov) / draws.shape[0])
    assert np.all(np.abs(draws.mean(axis=0) - mean) < 4 * se)
    emp = np.cov(draws, rowvar=False)
    assert np.linalg.norm(emp - cov) / np.linalg.norm(cov) < 0.02


def test_pencil_matches_dense_factor(eastern, rng):
    w = rng.uniform(100, 1000, 21)
    w[4] = 0.0  # held-out area
    r = eastern.structure.astype(float)
    pen = PencilFactor(w, r)
    for s in (0.1, 3.0, 500.0):
        q = np.diag(w) + s * r
        f = pen.at(s)
        v = rng.standard_normal(21)
        np.testing.assert_allclose(f.solve(v), np.linalg.solve(q, v), rtol=1e-8, atol=1e-12)
        cov = f.draw(np.eye(21))
        np.testing.assert_allclose(cov @ cov.T, np.linalg.inv(q), rtol=1e-7, atol=1e-12)


def test_non_spd_precision_rejected(rng):
    with pytest.raises(NumericalError):
        CholeskyFactor(np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(NumericalError):
        sample_constrained_gmrf(-np.eye(3), np.zeros(3), rng)
