import csv

import numpy as np
import pytest

from ffdrom.config import build
from ffdrom.ddpod import DomainSplit, fit_coefficients, schwarz_solve, split_domain, write_history
from ffdrom.errors import ConfigError, ConvergenceError, IllPosedFitError, ShapeError
from ffdrom.fom import BoundarySpec, Dirichlet, Neumann, PDEParams, assemble
from ffdrom.mesh import generate_mesh
from ffdrom.pipeline import Problem
from ffdrom.pod import PODBasis, build_basis
from ffdrom.sampling import grid_points
from conftest import small_raw
from oracles import direct_solve


def brute_force_interface(nx, ny, in1):
    pairs = set()
    for j in range(ny):
        for i in range(nx):
            c = j * nx + i
            if not in1[c]:
                continue
            for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                a, b = i + di, j + dj
                if 0 <= a < nx and 0 <= b < ny and not in1[b * nx + a]:
                    pairs.add((c, b * nx + a))
    return pairs


def block(nx, i0, i1, j0, j1):
    return np.array([j * nx + i for j in range(j0, j1 + 1) for i in range(i0, i1 + 1)])


# -- split ---------------------------------------------------------------------


def test_split_8x8_core_block_one_layer():
    m = generate_mesh(8, 8)
    s = split_domain(m, (0.375, 0.625, 0.375, 0.625), 1)
    np.testing.assert_array_equal(s.omega1, np.sort(block(8, 2, 5, 2, 5)))
    core = block(8, 3, 4, 3, 4)
    np.testing.assert_array_equal(s.omega2, np.setdiff1d(np.arange(64), core))
    np.testing.assert_array_equal(s.overlap, np.setdiff1d(s.omega1, core))
    assert s.interface_faces.size == 16
    in1 = np.isin(np.arange(64), s.omega1)
    assert set(zip(s.interface_inner.tolist(), s.interface_outer.tolist())) == brute_force_interface(8, 8, in1)


def test_split_touching_physical_boundary():
    m = generate_mesh(8, 8)
    s = split_domain(m, (0.375, 0.625, 0.0, 0.125), 1)
    np.testing.assert_array_equal(s.omega1, np.sort(block(8, 2, 5, 0, 1)))
    # 4 faces on top plus 2 on each side; the physical bottom is not an interface
    assert s.interface_faces.size == 8


@pytest.mark.parametrize(
    "box,layers",
    [((0.0, 1.0, 0.0, 1.0), 1), ((2.0, 3.0, 2.0, 3.0), 1), ((0.4, 0.6, 0.4, 0.6), 0)],
)
def test_split_errors(box, layers):
    with pytest.raises(ConfigError):
        split_domain(generate_mesh(8, 8), box, layers)


def test_split_invariants_checked():
    with pytest.raises(ConfigError):
        DomainSplit(np.array([0, 1]), np.array([2, 3]), np.array([], dtype=int), np.array([]), np.array([]), np.array([]), 4)


def test_demo_split_contains_bump_cells(demo_cfg):
    s = Problem(demo_cfg).split
    assert np.all(np.isin(demo_cfg.mesh.patch_cells("bump"), s.omega1))
    frac = s.omega1.size / demo_cfg.mesh.n_cells
    assert 0.10 <= frac <= 0.20


# -- fit -----------------------------------------------------------------------


@pytest.fixture(scope="module")
def small_problem():
    cfg = build(small_raw())
    prob = Problem(cfg)
    pts = grid_points(cfg.binding, 3)
    snaps = np.column_stack([prob.solve(mu, tol=1e-12)[0] for mu in pts])
    return prob, pts, snaps


def test_fit_exact_mode(small_problem):
    prob, _, snaps = small_problem
    basis, s = build_basis(snaps), prob.split
    fit = fit_coefficients(basis, basis.modes[s.omega1, 0], s)
    np.testing.assert_allclose(fit.alpha, np.eye(basis.rank)[0], atol=1e-10)
    assert fit.residual <= 1e-10


def test_fit_orthogonal_data_gives_zero(small_problem):
    prob, _, snaps = small_problem
    basis, s = build_basis(snaps), prob.split
    rng = np.random.default_rng(0)
    P = basis.rows(s.overlap)
    v = rng.normal(size=s.overlap.size)
    v -= P @ np.linalg.lstsq(P, v, rcond=None)[0]
    u1 = np.zeros(s.omega1.size)
    u1[np.searchsorted(s.omega1, s.overlap)] = v
    fit = fit_coefficients(basis, u1, s)
    np.testing.assert_allclose(fit.alpha, 0, atol=1e-8 * np.linalg.norm(v))


def test_fit_snapshot_reproduces_exterior(small_problem):
    prob, _, snaps = small_problem
    basis, s = build_basis(snaps), prob.split
    for k in range(snaps.shape[1]):
        u = snaps[:, k]
        fit = fit_coefficients(basis, u[s.omega1], s)
        rec = basis.rows(s.omega2) @ fit.alpha
        assert np.linalg.norm(rec - u[s.omega2]) <= 1e-8 * np.linalg.norm(u[s.omega2])


def test_fit_orthonormal_on_overlap_is_inner_product():
    m = generate_mesh(8, 8)
    s = split_domain(m, (0.375, 0.625, 0.375, 0.625), 1)
    rng = np.random.default_rng(1)
    Q, _ = np.linalg.qr(rng.normal(size=(s.overlap.size, 3)))
    modes = np.zeros((64, 3))
    modes[s.overlap] = Q
    basis = PODBasis(modes, np.ones(3))
    u1 = rng.normal(size=s.omega1.size)
    fit = fit_coefficients(basis, u1, s)
    np.testing.assert_allclose(fit.alpha, Q.T @ u1[np.searchsorted(s.omega1, s.overlap)], atol=1e-12)


def test_fit_ill_posed_cases():
    m = generate_mesh(8, 8)
    s = split_domain(m, (0.375, 0.625, 0.375, 0.625), 1)
    u1 = np.ones(s.omega1.size)
    away = np.zeros((64, 1))
    away[0] = 1.0  # vanishes on the overlap
    with pytest.raises(IllPosedFitError):
        fit_coefficients(PODBasis(away, [1.0]), u1, s)
    twin = np.zeros((64, 2))
    twin[s.overlap, 0] = twin[s.overlap, 1] = 1.0
    twin[0, 1] = 1.0  # differ only outside the overlap
    with pytest.raises(IllPosedFitError):
        fit_coefficients(PODBasis(twin, [1.0, 1.0]), u1, s)
    with pytest.raises(IllPosedFitError):
        fit_coefficients(PODBasis(np.zeros((64, 0)), []), u1, s)
    with pytest.raises(ShapeError):
        fit_coefficients(PODBasis(twin, [1.0, 1.0]), u1[:-1], s)


# -- schwarz -------------------------------------------------------------------


def monolithic(prob, mu):
    mesh = prob.morph(mu)
    sys_ = assemble(mesh, prob.cfg.bc, prob.cfg.pde)
    return mesh, direct_solve(sys_.matrix, sys_.rhs)


def test_schwarz_matches_monolithic_in_database(small_problem):
    prob, pts, snaps = small_problem
    basis = build_basis(snaps)
    for k in (0, 4, 8):
        mesh, ref = monolithic(prob, pts[k])
        res = schwarz_solve(mesh, prob.cfg.bc, prob.cfg.pde, basis, prob.split, tol=1e-8)
        assert res.state.converged
        assert np.max(np.abs(res.composite.values - ref)) <= 1e-6 * np.max(np.abs(ref))
        assert len(res.state.history) == res.state.iteration


def test_schwarz_zero_exterior_converges_at_once():
    m = generate_mesh(8, 8)
    s = split_domain(m, (0.375, 0.625, 0.375, 0.625), 1)
    bc = BoundarySpec({p: Dirichlet(0.0) for p in ("inlet", "outlet", "top", "bottom")})
    basis = PODBasis(np.ones((64, 1)) / 8.0, [1.0])
    res = schwarz_solve(m, bc, PDEParams(1.0), basis, s)
    assert res.state.iteration == 1 and res.state.converged
    np.testing.assert_array_equal(res.composite.values, 0.0)


def test_schwarz_initialisation_independent(small_problem):
    prob, pts, snaps = small_problem
    basis = build_basis(snaps)
    mu = np.array([0.05, -0.1])
    mesh = prob.morph(mu)
    tol = 1e-6
    a = schwarz_solve(mesh, prob.cfg.bc, prob.cfg.pde, basis, prob.split, tol=tol)
    b = schwarz_solve(mesh, prob.cfg.bc, prob.cfg.pde, basis, prob.split, tol=tol, initial_alpha=basis.modes.T @ snaps[:, 4])
    ua, ub = a.composite.values, b.composite.values
    assert np.max(np.abs(ua - ub)) <= 5 * tol * np.max(np.abs(ua))


def test_reported_fit_residual_is_consistent(small_problem):
    prob, pts, snaps = small_problem
    basis, s = build_basis(snaps), prob.split
    mesh = prob.morph(pts[2])
    res = schwarz_solve(mesh, prob.cfg.bc, prob.cfg.pde, basis, s)
    u = res.composite.values
    u1_ov = res.u1[np.searchsorted(s.omega1, s.overlap)]
    u2_ov = basis.rows(s.overlap) @ res.state.alpha
    ratio = np.linalg.norm(u1_ov - u2_ov) / np.linalg.norm(u1_ov)
    assert ratio <= res.state.fit_residuals[-1] * (1 + 1e-9) + 1e-15
    np.testing.assert_array_equal(u[s.omega1], res.u1)


def test_cost_locality_probe(small_problem):
    prob, pts, snaps = small_problem
    basis, s = build_basis(snaps), prob.split
    res = schwarz_solve(prob.morph(pts[0]), prob.cfg.bc, prob.cfg.pde, basis, s)
    st = res.state
    assert st.basis_rows_touched == s.overlap.size + s.exterior.size
    assert st.basis_rows_touched < prob.cfg.mesh.n_cells
    assert st.cells_swept % s.omega1.size == 0


def test_non_convergence_attaches_history(small_problem):
    prob, pts, snaps = small_problem
    basis = build_basis(snaps)
    with pytest.raises(ConvergenceError) as exc:
        schwarz_solve(prob.morph([0.1, 0.1]), prob.cfg.bc, prob.cfg.pde, basis, prob.split, tol=1e-14, max_outer=2)
    assert exc.value.history.iteration == 2 and len(exc.value.history.history) == 2


def test_rejects_empty_basis_and_shape(small_problem):
    prob, _, snaps = small_problem
    mesh = prob.cfg.mesh
    with pytest.raises(ConfigError):
        schwarz_solve(mesh, prob.cfg.bc, prob.cfg.pde, PODBasis(np.zeros((mesh.n_cells, 0)), []), prob.split)
    with pytest.raises(ShapeError):
        schwarz_solve(mesh, prob.cfg.bc, prob.cfg.pde, PODBasis(np.ones((5, 1)), [1.0]), prob.split)


def test_write_history(tmp_path, small_problem):
    prob, pts, snaps = small_problem
    res = schwarz_solve(prob.morph(pts[3]), prob.cfg.bc, prob.cfg.pde, build_basis(snaps), prob.split)
    path = tmp_path / "h.csv"
    write_history(res.state, path)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["iteration", "interface_change", "fit_residual"]
    assert len(rows) == res.state.iteration + 1
    assert float(rows[-1][1]) == res.state.history[-1]


def test_neutral_direction_is_left_alone():
    # omega1 touches no physical boundary and the only mode is constant: every
    # constant is a fixed point, so the start level (mean Dirichlet value) is kept
    m = generate_mesh(8, 8)
    s = split_domain(m, (0.375, 0.625, 0.375, 0.625), 1)
    bc = BoundarySpec({"inlet": Dirichlet(1.0), "outlet": Dirichlet(1.0), "top": Neumann(0.0), "bottom": Neumann(0.0)})
    basis = PODBasis(np.ones((64, 1)) / 8.0, [1.0])
    res = schwarz_solve(m, bc, PDEParams(1.0), basis, s)
    np.testing.assert_allclose(res.composite.values, 1.0, atol=1e-8)
