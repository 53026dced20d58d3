import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ffdrom.delaunay import delaunay, locate
from ffdrom.errors import ExtrapolationError
from ffdrom.pod import PODBasis, SnapshotMatrix, build_basis, project
from ffdrom.podi import PODIModel, build_podi, coefficients_in_simplex, evaluate_podi, interpolate_coefficients


def random_db(rng, n=12, M=60):
    corners = np.array(list(itertools.product([-1.0, 1.0], repeat=2)))
    pts = np.vstack([corners, rng.uniform(-1, 1, (n - 4, 2))])
    return SnapshotMatrix(rng.normal(size=(M, n)), pts)


def interior_edges(tri):
    for t in range(tri.n_simplices):
        for k in range(3):
            nb = int(tri.adjacency[t, k])
            if nb > t:
                a, b = np.delete(tri.simplices[t], k)
                yield t, nb, tri.points[a], tri.points[b]


def test_exact_at_database_points():
    rng = np.random.default_rng(0)
    db = random_db(rng)
    model = build_podi(db, build_basis(db.columns))
    assert model.coeff_table.shape == (12, 12)
    for k, mu in enumerate(db.parameter_points):
        u = db.columns[:, k]
        assert np.linalg.norm(evaluate_podi(model, mu) - u) <= 1e-10 * np.linalg.norm(u)


def test_rank_zero_basis_gives_empty_table():
    rng = np.random.default_rng(1)
    db = random_db(rng, n=5)
    model = build_podi(db, PODBasis(np.zeros((60, 0)), np.zeros(0)))
    assert model.coeff_table.shape == (5, 0)
    np.testing.assert_array_equal(evaluate_podi(model, [0.0, 0.0]), np.zeros(60))


def test_edge_midpoint_is_mean_of_rows():
    rng = np.random.default_rng(2)
    db = random_db(rng)
    model = build_podi(db, build_basis(db.columns))
    tri = model.triangulation
    for t, nb, a, b in interior_edges(tri):
        i, j = (int(np.argmin(np.linalg.norm(tri.points - p, axis=1))) for p in (a, b))
        alpha, _ = interpolate_coefficients(model, 0.5 * (a + b))
        np.testing.assert_allclose(alpha, 0.5 * (model.coeff_table[i] + model.coeff_table[j]), atol=1e-12)


def test_outside_hull_is_an_error():
    rng = np.random.default_rng(3)
    db = random_db(rng)
    model = build_podi(db, build_basis(db.columns))
    with pytest.raises(ExtrapolationError):
        evaluate_podi(model, [1.5, 0.0])


def affine_model(rng, pts):
    tri = delaunay(pts)
    A, c = rng.normal(size=(3, 2)), rng.normal(size=3)
    basis = PODBasis(np.eye(5)[:, :3], np.ones(3))
    return PODIModel(basis, tri, pts @ A.T + c), A, c


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_reproduces_affine_functions(seed):
    rng = np.random.default_rng(seed)
    pts = np.vstack([list(itertools.product([0.0, 1.0], repeat=2)), rng.random((10, 2))])
    model, A, c = affine_model(rng, pts)
    for mu in rng.random((20, 2)):
        alpha, _ = interpolate_coefficients(model, mu)
        np.testing.assert_allclose(alpha, A @ mu + c, atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_continuous_across_shared_edges(seed):
    rng = np.random.default_rng(seed)
    db = random_db(rng, n=10, M=20)
    model = build_podi(db, build_basis(db.columns))
    for t, nb, a, b in interior_edges(model.triangulation):
        for s in (0.1, 0.5, 0.77):
            mu = a + s * (b - a)
            np.testing.assert_allclose(
                coefficients_in_simplex(model, t, mu), coefficients_in_simplex(model, nb, mu), atol=1e-12
            )


def test_coefficients_are_projections():
    rng = np.random.default_rng(4)
    db = random_db(rng, n=9, M=30)
    basis = build_basis(db.columns)
    model = build_podi(db, basis)
    for k in range(9):
        np.testing.assert_allclose(model.coeff_table[k], project(basis, db.columns[:, k]), atol=0)


def test_seed_does_not_change_result():
    rng = np.random.default_rng(5)
    db = random_db(rng)
    model = build_podi(db, build_basis(db.columns))
    mu = np.array([0.1, -0.2])
    ref = evaluate_podi(model, mu)
    for seed in range(model.triangulation.n_simplices):
        np.testing.assert_allclose(evaluate_podi(model, mu, seed=seed), ref, atol=1e-13)
    t, _ = locate(model.triangulation, mu)
    assert t >= 0
