from __future__ import annotations

import json
import math
from itertools import permutations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sigma2lab import solver
from sigma2lab.solver import (
    EllipticityLossError,
    GridDomain,
    NonConvergenceError,
    Quadratic,
    ScalarField,
    SolveConfig,
    barrier_initial_guess,
    discrete_hessian,
    hessian_field,
    load_field,
    newton_solve,
    residual,
    save_field,
)
from sigma2lab.symfun import sigma_k_mat


def field_of(dom, fun):
    return ScalarField(dom, fun(dom.mesh()))


def stencil_oracle(u, node, h):
    """Second differences at one node, written out per entry."""
    n = u.ndim
    H = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            def at(di, dj):
                idx = list(node)
                idx[i] += di
                idx[j] += dj
                return u[tuple(idx)]
            if i == j:
                p, m = list(node), list(node)
                p[i] += 1
                m[i] -= 1
                H[i, i] = (u[tuple(p)] - 2 * u[tuple(node)] + u[tuple(m)]) / h ** 2
            else:
                H[i, j] = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4 * h ** 2)
    return H


# -- grid ------------------------------------------------------------------------

def test_grid_validation():
    with pytest.raises(ValueError):
        GridDomain(3, -1, 1, 4)
    with pytest.raises(ValueError):
        GridDomain(2, [0, 0], [1, 2], 9)
    with pytest.raises(ValueError):
        GridDomain(2, 1, 0, 9)
    dom = GridDomain(2, [0, 1], [2, 3], 9)
    assert dom.h == 0.25
    assert dom.mesh().shape == (9, 9, 2)
    assert dom.boundary_mask().sum() == 9 * 9 - 7 * 7


# -- stencils ------------------------------------------------------------------------

@settings(max_examples=60, deadline=None)
@given(st.integers(2, 3), st.integers(5, 12), st.integers(0, 2**32 - 1))
def test_hessian_exact_on_quadratics(n, m, seed):
    rng = np.random.default_rng(seed)
    G = rng.normal(size=(n, n))
    M = G + G.T
    q = Quadratic(M, rng.normal(size=n), float(rng.normal()))
    dom = GridDomain.cube(n, m, half_width=float(rng.uniform(0.5, 3)), center=rng.normal(size=n))
    H = hessian_field(q(dom.mesh()), dom.h)
    scale = np.abs(q(dom.mesh())).max() / dom.h ** 2
    assert np.abs(H - M).max() <= 1e-12 * max(scale, 1.0)


def test_hessian_matches_written_out_stencil():
    rng = np.random.default_rng(1)
    dom = GridDomain.cube(3, 7)
    u = rng.normal(size=dom.shape)
    f = ScalarField(dom, u)
    for node in [(1, 1, 1), (3, 2, 5), (5, 5, 5)]:
        np.testing.assert_allclose(discrete_hessian(f, node).entries,
                                   stencil_oracle(u, node, dom.h), rtol=1e-13, atol=1e-12)


def test_discrete_hessian_examples():
    dom = GridDomain.cube(3, 9)
    assert not np.any(discrete_hessian(ScalarField(dom, np.full(dom.shape, 2.5)), (4, 4, 4)).entries)
    f = field_of(dom, lambda X: (np.sum(X * X, axis=-1) - 1) / (2 * math.sqrt(3)))
    for node in [(1, 1, 1), (4, 2, 7)]:
        H = discrete_hessian(f, node).entries
        np.testing.assert_allclose(H, np.eye(3) / math.sqrt(3), atol=1e-13)
        assert sigma_k_mat(H, 2) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("node", [(0, 4, 4), (4, 8, 4), (4, 4, 9), (4, 4)])
def test_discrete_hessian_rejects_boundary(node):
    dom = GridDomain.cube(3, 9)
    with pytest.raises(IndexError):
        discrete_hessian(ScalarField(dom, np.zeros(dom.shape)), node)


# -- barrier / residual ------------------------------------------------------------------

@pytest.mark.parametrize("n", [2, 3])
def test_barrier_has_unit_sigma2(n):
    dom = GridDomain.cube(n, 9)
    w = barrier_initial_guess(dom, solver.barrier_level(dom))
    assert np.abs(residual(w)).max() <= 1e-12
    H = discrete_hessian(w, (4,) * n).entries
    np.testing.assert_allclose(H, 2 / math.sqrt(2 * n * (n - 1)) * np.eye(n), atol=1e-12)
    assert np.all(w.boundary_values() <= 1e-15)


def test_barrier_center_value():
    dom = GridDomain.cube(3, 9)
    assert barrier_initial_guess(dom, 0.0).values[4, 4, 4] == 0.0
    assert solver.barrier_level(dom) == pytest.approx(3 / math.sqrt(12))


def test_residual_linear_in_small_perturbation():
    dom = GridDomain.cube(3, 9)
    X = dom.mesh()
    bump = np.prod(np.cos(np.pi * X / 2), axis=-1)
    w = solver.barrier_values(dom, 1.0)
    r1 = np.abs(residual(ScalarField(dom, w + 1e-6 * bump))).max()
    r2 = np.abs(residual(ScalarField(dom, w + 5e-7 * bump))).max()
    assert r1 > 0
    assert r1 / r2 == pytest.approx(2.0, rel=1e-3)


def test_jacobian_matches_directional_derivative():
    dom = GridDomain.cube(3, 7)
    rng = np.random.default_rng(3)
    u = solver.barrier_values(dom, 1.0) + 0.01 * rng.normal(size=dom.shape)
    v = np.zeros(dom.shape)
    v[1:-1, 1:-1, 1:-1] = rng.normal(size=dom.interior_shape)
    H = hessian_field(u, dom.h)
    J = solver._Stencil(dom).matrix(solver.sigma2_gradient_batch(H))
    t = 1e-6
    fd = (residual(ScalarField(dom, u + t * v)) - residual(ScalarField(dom, u - t * v))) / (2 * t)
    np.testing.assert_allclose(J @ v[1:-1, 1:-1, 1:-1].ravel(), fd.ravel(), rtol=1e-6, atol=1e-6)


# -- Newton --------------------------------------------------------------------------

def exact_quadratic(n):
    if n == 2:
        return Quadratic(np.diag([2.0, 0.5]), np.array([0.3, -0.1]), 0.2)
    c = 1 / math.sqrt(3)
    return Quadratic(c * np.eye(3), c=-c / 2)


@pytest.mark.parametrize("n,m", [(2, 9), (2, 17), (3, 9), (3, 17)])
def test_quadratic_reproduction(n, m):
    g = exact_quadratic(n)
    dom = GridDomain.cube(n, m)
    rep = newton_solve(dom, g)
    assert rep.converged and rep.gamma2_certified
    assert rep.iterations <= 6
    assert np.abs(rep.field.values - g(dom.mesh())).max() <= 10 * SolveConfig().tol_residual
    rep_b = newton_solve(dom, g, initial="barrier")
    assert rep_b.iterations <= 25
    assert np.abs(rep_b.field.values - g(dom.mesh())).max() <= 1e-9


def test_rotated_quadratic_reproduction():
    rng = np.random.default_rng(8)
    Q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    M = Q @ np.diag([1.5, 1.0, -0.2]) @ Q.T
    g = Quadratic(M, np.array([0.1, 0.2, -0.3]))
    dom = GridDomain.cube(3, 9)
    rep = newton_solve(dom, g, initial="barrier")
    assert np.abs(rep.field.values - g(dom.mesh())).max() <= 1e-9


@pytest.fixture(scope="module")
def zero_solve():
    dom = GridDomain.cube(3, 17)
    return dom, newton_solve(dom)


def test_zero_data_sandwich_and_certificate(zero_solve):
    dom, rep = zero_solve
    u = rep.field.values
    a = solver.barrier_level(dom)
    assert a == pytest.approx(3 / math.sqrt(12), rel=1e-15)
    w = solver.barrier_values(dom, a)
    assert rep.converged and rep.gamma2_certified
    assert np.all(w <= u) and np.all(u <= 0)
    assert np.all(rep.field.boundary_values() == 0.0)
    assert rep.min_ellipticity > 0
    hist = rep.residual_history
    assert all(b < a for a, b in zip(hist, hist[1:]))
    assert hist[-1] <= 1e-10


def test_zero_data_symmetry(zero_solve):
    _, rep = zero_solve
    u = rep.field.values
    for perm in permutations(range(3)):
        assert np.abs(np.transpose(u, perm) - u).max() <= 1e-9
    for ax in range(3):
        assert np.abs(np.flip(u, axis=ax) - u).max() <= 1e-9


def test_direct_linear_solver_agrees():
    dom = GridDomain.cube(2, 17)
    a = newton_solve(dom)
    b = newton_solve(dom, cfg=SolveConfig(linear_solver="direct"))
    assert np.abs(a.field.values - b.field.values).max() <= 1e-9


def test_nonconvergence_reports_history():
    dom = GridDomain.cube(3, 9)
    with pytest.raises(NonConvergenceError) as ei:
        newton_solve(dom, cfg=SolveConfig(max_newton=1))
    assert len(ei.value.history) == 2


def test_ellipticity_loss_names_node():
    dom = GridDomain.cube(2, 9)
    bad = -solver.barrier_values(dom, 0.0)
    with pytest.raises(EllipticityLossError) as ei:
        newton_solve(dom, initial=bad)
    assert all(1 <= i <= 7 for i in ei.value.node)


def test_solve_config_validation():
    with pytest.raises(ValueError):
        SolveConfig(tol_residual=0)
    with pytest.raises(ValueError):
        SolveConfig(linear_solver="lu")


def test_field_io_roundtrip(tmp_path, zero_solve):
    _, rep = zero_solve
    jpath, bpath = save_field(tmp_path / "u", rep.field)
    back = load_field(jpath)
    assert np.array_equal(back.values, rep.field.values)
    assert back.domain == rep.field.domain
    header = json.loads(jpath.read_text())
    assert header["schema_version"] == 1 and header["domain"]["m"] == 17
    d = rep.to_dict()
    assert d["residual_history"] == list(rep.residual_history)
    json.dumps(d)
