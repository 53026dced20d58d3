import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ffdrom.delaunay import Triangulation2D, delaunay, locate
from ffdrom.errors import DegenerateInputError, ExtrapolationError
from oracles import empty_circumcircle_violations, hull_area


def grid(n):
    a = np.linspace(0.0, 1.0, n)
    return np.array(list(itertools.product(a, a)))


def check(tri):
    assert not empty_circumcircle_violations(tri.points, tri.simplices)
    assert np.all(tri.areas() > 0)
    assert abs(tri.areas().sum() - hull_area(tri.points)) <= 1e-10


def test_three_points_one_triangle():
    tri = delaunay([[0, 0], [1, 0], [0, 1]])
    assert tri.n_simplices == 1
    np.testing.assert_array_equal(tri.adjacency, [[-1, -1, -1]])


def test_unit_square_cocircular():
    tri = delaunay([[0, 0], [1, 0], [1, 1], [0, 1]])
    assert tri.n_simplices == 2
    check(tri)
    # both diagonals are admissible; the oracle accepts either one
    other = np.array([[0, 1, 3], [1, 2, 3]]) if set(map(tuple, np.sort(tri.simplices, 1))) == {(0, 1, 2), (0, 2, 3)} else np.array([[0, 1, 2], [0, 2, 3]])
    assert not empty_circumcircle_violations(tri.points, other)


def test_three_by_three_grid():
    tri = delaunay(grid(3))
    assert tri.n_simplices == 8
    assert tri.areas().sum() == pytest.approx(1.0, abs=1e-15)
    check(tri)


@pytest.mark.parametrize(
    "pts",
    [
        [[0, 0], [1, 1]],
        [[0, 0], [1, 1], [2, 2], [3, 3]],
        [[0, 0], [0, 0], [0, 0]],
        [[0, 0], [1, 0], [0, 1], [1, 0]],
        [[0, 0], [1, 0], [np.nan, 1]],
    ],
)
def test_degenerate_inputs(pts):
    with pytest.raises(DegenerateInputError):
        delaunay(pts)


def test_deterministic_for_fixed_order():
    pts = np.random.default_rng(0).random((25, 2))
    a, b = delaunay(pts), delaunay(pts)
    np.testing.assert_array_equal(a.simplices, b.simplices)


def test_adjacency_is_symmetric():
    tri = delaunay(np.random.default_rng(1).random((20, 2)))
    for t in range(tri.n_simplices):
        for k in range(3):
            nb = tri.adjacency[t, k]
            if nb < 0:
                continue
            assert t in tri.adjacency[nb]
            shared = set(tri.simplices[t]) - {tri.simplices[t, k]}
            assert shared <= set(tri.simplices[nb])


def test_dict_round_trip():
    tri = delaunay(grid(4))
    back = Triangulation2D.from_dict(tri.to_dict())
    np.testing.assert_array_equal(back.simplices, tri.simplices)
    np.testing.assert_array_equal(back.adjacency, tri.adjacency)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n=st.integers(3, 50))
def test_random_sets_pass_brute_force_oracle(seed, n):
    rng = np.random.default_rng(seed)
    pts = rng.random((n, 2))
    if abs(np.linalg.det(np.c_[pts[:3], np.ones(3)])) < 1e-9 and n == 3:
        return
    check(delaunay(pts))


def test_clustered_and_grid_plus_points():
    rng = np.random.default_rng(5)
    pts = np.vstack([grid(3), 0.5 + 0.01 * rng.random((10, 2))])
    check(delaunay(pts))


# -- locate --------------------------------------------------------------------


def test_locate_vertex_centroid_and_outside():
    tri = delaunay(grid(3))
    for k, p in enumerate(tri.points):
        t, lam = locate(tri, p)
        assert lam.max() == pytest.approx(1.0, abs=1e-12)
        assert tri.simplices[t][np.argmax(lam)] == k
    for t in range(tri.n_simplices):
        c = tri.points[tri.simplices[t]].mean(axis=0)
        s, lam = locate(tri, c, seed=(t + 3) % tri.n_simplices)
        assert s == t
        np.testing.assert_allclose(lam, 1 / 3, atol=1e-12)
    with pytest.raises(ExtrapolationError):
        locate(tri, [1.2, 0.5])


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_locate_barycentric_contract(seed):
    rng = np.random.default_rng(seed)
    tri = delaunay(rng.random((15, 2)))
    for _ in range(10):
        a, b, c = tri.points[tri.simplices[rng.integers(tri.n_simplices)]]
        w = rng.dirichlet(np.ones(3))
        mu = w[0] * a + w[1] * b + w[2] * c
        t, lam = locate(tri, mu, seed=int(rng.integers(tri.n_simplices)))
        assert np.all(lam >= 0) and abs(lam.sum() - 1) <= 1e-12
        np.testing.assert_allclose(lam @ tri.points[tri.simplices[t]], mu, atol=1e-12)
