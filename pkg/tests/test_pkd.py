from functools import reduce

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from collapsed_sbp.errors import ConfigurationError, DomainError
from collapsed_sbp.exact import multi_indices
from collapsed_sbp.jacobi import lagrange_matrix
from collapsed_sbp.pkd import (
    apply_V,
    apply_Vt,
    build_modal_basis,
    modal_projection,
    num_modes,
    pkd_eval,
    vandermonde,
)
from collapsed_sbp.refelem import ElementShape, build_operators, collapsed_to_ref, default_config

TRI, TET = ElementShape.TRIANGLE, ElementShape.TETRAHEDRON


def basis_for(shape, p, q=None):
    ops = build_operators(default_config(shape, p if q is None else q))
    return ops, build_modal_basis(ops, p)


def interior_points(shape, n, seed=0):
    rng = np.random.default_rng(seed)
    lam = rng.dirichlet(np.ones(shape.dim + 1), size=n)
    return -1 + 2 * lam[:, 1:]


def test_constant_mode_values():
    assert pkd_eval(TRI, (0, 0), [0.1, -0.4]) == pytest.approx(1 / np.sqrt(2), abs=1e-15)
    assert pkd_eval(TET, (0, 0, 0), [-0.5, -0.2, -0.1]) == pytest.approx(np.sqrt(3) / 2, abs=1e-15)


def test_linear_mode_unit_norm():
    ops = build_operators(default_config(TRI, 2))
    v = pkd_eval(TRI, (1, 0), ops.xi)
    assert ops.w @ v ** 2 == pytest.approx(1.0, abs=1e-12)


def test_singular_point_raises():
    with pytest.raises(DomainError):
        pkd_eval(TRI, (1, 1), [-1.0, 1.0])


@pytest.mark.parametrize("shape", [TRI, TET])
def test_degree_zero_vandermonde(shape):
    ops = build_operators(default_config(shape, 3))
    V = vandermonde(shape, 0, ops.xi)
    assert V.shape == (ops.n_nodes, 1)
    assert np.allclose(V, 1 / np.sqrt(shape.volume), atol=1e-14)


@pytest.mark.parametrize("shape,p", [(TRI, p) for p in range(0, 9)] + [(TET, p) for p in range(0, 7)])
def test_orthonormality(shape, p):
    ops, b = basis_for(shape, p)
    assert b.orthonormal
    assert np.max(np.abs(b.V.T @ (ops.w[:, None] * b.V) - np.eye(num_modes(shape.dim, p)))) <= 1e-12


def test_tet_modes_reproduced_by_tensor_interpolation():
    ops, b = basis_for(TET, 2)
    eta = np.random.default_rng(1).uniform(-0.95, 0.95, size=(15, 3))
    L = [lagrange_matrix(r.nodes, eta[:, m]) for m, r in enumerate(ops.rules)]
    # tensor Lagrange basis on the collapsed grid, first direction fastest
    interp = np.stack([reduce(np.kron, [L[2][i], L[1][i], L[0][i]]) for i in range(len(eta))])
    direct = vandermonde(TET, 2, collapsed_to_ref(TET, eta))
    assert np.max(np.abs(interp @ b.V - direct)) < 1e-12


@pytest.mark.parametrize("shape,p", [(TRI, 5), (TRI, 8), (TET, 4), (TET, 2)])
def test_sum_factorization_matches_dense(shape, p):
    _, b = basis_for(shape, p)
    rng = np.random.default_rng(p)
    for _ in range(100):
        c = rng.standard_normal(b.n_modes)
        u = rng.standard_normal(b.n_nodes)
        assert np.max(np.abs(apply_V(b, c) - b.V @ c)) < 1e-13 * max(1, np.abs(b.V @ c).max())
        assert np.max(np.abs(apply_Vt(b, u) - b.V.T @ u)) < 1e-13 * max(1, np.abs(b.V.T @ u).max())
        assert np.dot(apply_V(b, c), u) == pytest.approx(np.dot(c, apply_Vt(b, u)), abs=1e-12)


def test_batched_and_zero_inputs():
    _, b = basis_for(TRI, 3)
    C = np.random.default_rng(0).standard_normal((4, b.n_modes))
    assert np.allclose(apply_V(b, C), C @ b.V.T, atol=1e-13)
    assert np.all(apply_V(b, np.zeros(b.n_modes)) == 0)
    assert np.all(apply_Vt(b, np.zeros(b.n_nodes)) == 0)
    with pytest.raises(ValueError):
        apply_V(b, np.zeros(b.n_modes + 1))


def test_modal_degree_above_q_rejected():
    ops = build_operators(default_config(TRI, 2))
    with pytest.raises(ConfigurationError):
        build_modal_basis(ops, 3)


@pytest.mark.parametrize("shape,p", [(TRI, 3), (TET, 2)])
def test_basis_is_polynomial(shape, p):
    """The collapsed-coordinate evaluation agrees with a total-degree-p polynomial fit."""
    alphas = multi_indices(shape.dim, p)
    xs = interior_points(shape, 3 * len(alphas), seed=2)
    mono = np.stack([np.prod(xs ** np.array(a), axis=1) for a in alphas], 1)
    V = vandermonde(shape, p, xs)
    coef, *_ = np.linalg.lstsq(mono, V, rcond=None)
    assert np.max(np.abs(mono @ coef - V)) < 1e-10


def test_projection_of_basis_function():
    ops, b = basis_for(TRI, 4)
    for k in (0, 3, 7):
        c = modal_projection(b, ops.w, b.V[:, k])
        e = np.zeros(b.n_modes)
        e[k] = 1
        assert np.max(np.abs(c - e)) < 1e-12


def test_projection_reproduces_monomial():
    ops, b = basis_for(TET, 3)
    u = ops.xi[:, 0] ** 2 * ops.xi[:, 2] - ops.xi[:, 1] ** 3
    assert np.max(np.abs(apply_V(b, modal_projection(b, ops.w, u)) - u)) < 1e-11


def test_projection_matches_normal_equations():
    ops, b = basis_for(TRI, 4)
    x = 0.25 * (ops.xi + 1)
    u = np.sin(2 * np.pi * x[:, 0]) * np.sin(2 * np.pi * x[:, 1])
    jac = 1 + 0.1 * ops.xi[:, 0]
    c = modal_projection(b, ops.w, u, jac=jac)
    WJ = ops.w * jac
    ref = np.linalg.solve(b.V.T @ (WJ[:, None] * b.V), b.V.T @ (WJ * u))
    assert np.max(np.abs(c - ref)) < 1e-12
    c0 = modal_projection(b, ops.w, u)
    ref0 = np.linalg.solve(b.V.T @ (ops.w[:, None] * b.V), b.V.T @ (ops.w * u))
    assert np.max(np.abs(c0 - ref0)) < 1e-12


@settings(max_examples=25, deadline=None)
@given(p=st.integers(0, 6), seed=st.integers(0, 1000))
def test_adjointness_property(p, seed):
    _, b = basis_for(TRI, p)
    rng = np.random.default_rng(seed)
    c, u = rng.standard_normal(b.n_modes), rng.standard_normal(b.n_nodes)
    assert np.dot(apply_V(b, c), u) == pytest.approx(np.dot(c, apply_Vt(b, u)), rel=1e-12, abs=1e-12)
