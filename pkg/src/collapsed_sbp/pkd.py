"""Proriol-Koornwinder-Dubiner orthonormal basis and generalized Vandermonde matrices.

The basis is a warped tensor product in collapsed coordinates,

    triangle:    phi = psi1(eta1) psi2(eta2)
    tetrahedron: phi = psi1(eta1) psi2(eta2) psi3(eta3)

which lets ``V`` and ``V^T`` be applied one direction at a time on the
tensor-product node grid of an :class:`SBPOperatorSet`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .exact import multi_indices
from .jacobi import JacobiWeight, jacobi_table
from .refelem import (
    ElementShape,
    SBPOperatorSet,
    as_shape,
    collapsed_jacobian_inverse,
    ref_to_collapsed,
    ref_to_collapsed_limit,
)

_SQ2 = np.sqrt(2.0)


def num_modes(d, p) -> int:
    from math import comb

    return comb(p + d, d)


def _jacobi_with_deriv(nmax, a, x):
    """Orthonormal P_n^(a,0) and derivatives for n <= nmax."""
    P = jacobi_table(nmax, JacobiWeight(a, 0.0), x)
    dP = np.zeros_like(P)
    if nmax >= 1:
        Q = jacobi_table(nmax - 1, JacobiWeight(a + 1, 1.0), x)
        n = np.arange(1, nmax + 1, dtype=float)
        dP[1:] = np.sqrt(n * (n + a + 1))[:, None] * Q
    return P, dP


def _psi1(p, x):
    P, dP = _jacobi_with_deriv(p, 0.0, x)
    return _SQ2 * P.T, _SQ2 * dP.T


def _warped(p, k, a, scale, x):
    """scale * (1 - x)^k * P_n^(a,0)(x) for n = 0..p, with x-derivatives."""
    P, dP = _jacobi_with_deriv(p, a, x)
    f = (1 - x) ** k
    df = -k * (1 - x) ** (k - 1) if k > 0 else np.zeros_like(x)
    val = scale * (f[None, :] * P)
    der = scale * (df[None, :] * P + f[None, :] * dP)
    return val.T, der.T


def _psi2(p, a1, x):
    return _warped(p - a1, a1, 2 * a1 + 1.0, 1.0, x)


def _psi3(p, s, x):
    return _warped(p - s, s, 2 * s + 2.0, 2.0, x)


def _eval_eta(shape, p, eta, deriv=False):
    """Basis values (and eta-derivatives) at collapsed points, pi order."""
    d = shape.dim
    alphas = multi_indices(d, p)
    eta = np.atleast_2d(eta)
    A1, dA1 = _psi1(p, eta[:, 0])
    B2 = {a1: _psi2(p, a1, eta[:, 1]) for a1 in range(p + 1)}
    if d == 3:
        B3 = {s: _psi3(p, s, eta[:, 2]) for s in range(p + 1)}
    n = len(eta)
    V = np.empty((n, len(alphas)))
    dV = np.empty((d, n, len(alphas))) if deriv else None
    for j, a in enumerate(alphas):
        f1, g1 = A1[:, a[0]], dA1[:, a[0]]
        f2, g2 = B2[a[0]][0][:, a[1]], B2[a[0]][1][:, a[1]]
        if d == 2:
            V[:, j] = f1 * f2
            if deriv:
                dV[0, :, j] = g1 * f2
                dV[1, :, j] = f1 * g2
            continue
        s = a[0] + a[1]
        f3, g3 = B3[s][0][:, a[2]], B3[s][1][:, a[2]]
        V[:, j] = f1 * f2 * f3
        if deriv:
            dV[0, :, j] = g1 * f2 * f3
            dV[1, :, j] = f1 * g2 * f3
            dV[2, :, j] = f1 * f2 * g3
    return V, dV


def pkd_eval(shape, alpha, xi):
    """Evaluate the PKD function with multi-index ``alpha`` at reference points."""
    shape = as_shape(shape)
    alpha = tuple(int(a) for a in alpha)
    p = sum(alpha)
    xi = np.asarray(xi, dtype=float)
    single = xi.ndim == 1
    eta = ref_to_collapsed(shape, np.atleast_2d(xi))
    V, _ = _eval_eta(shape, p, eta)
    col = multi_indices(shape.dim, p).index(alpha)
    out = V[:, col]
    return out[0] if single else out


def vandermonde(shape, p, xi, allow_singular=False):
    """V[i, j] = phi_j(xi_i).

    ``allow_singular`` resolves collapsed singular points by their limit;
    the basis is polynomial so the value is well defined there.
    """
    shape = as_shape(shape)
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    eta = ref_to_collapsed_limit(shape, xi) if allow_singular else ref_to_collapsed(shape, xi)
    return _eval_eta(shape, p, eta)[0]


def grad_vandermonde(shape, p, xi):
    """dV[n, i, j] = d phi_j / d xi_n at xi_i (non-singular points only)."""
    shape = as_shape(shape)
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    eta = ref_to_collapsed(shape, xi)
    _, dV = _eval_eta(shape, p, eta, deriv=True)
    G = collapsed_jacobian_inverse(shape, eta)
    return np.einsum("lij,iln->nij", dV, G)


@dataclass
class ModalBasis:
    """PKD basis of degree p tied to the volume node grid of an operator set."""

    shape: ElementShape
    p: int
    alphas: list
    V: np.ndarray
    M: np.ndarray
    orthonormal: bool
    tensor_shape: tuple
    A1: np.ndarray = field(repr=False)
    B2: list = field(repr=False)
    B3: list = field(default=None, repr=False)
    _plan: dict = field(default_factory=dict, repr=False)

    @property
    def n_modes(self) -> int:
        return len(self.alphas)

    @property
    def n_nodes(self) -> int:
        return self.V.shape[0]

    def apply_V(self, c):
        return apply_V(self, c)

    def apply_Vt(self, u):
        return apply_Vt(self, u)


def build_modal_basis(ops: SBPOperatorSet, p=None, tol=1e-12) -> ModalBasis:
    """PKD basis of degree ``p`` (default q) on the volume nodes of ``ops``."""
    shape = ops.shape
    p = ops.q if p is None else int(p)
    if p < 0 or p > ops.q:
        raise ConfigurationError(f"modal degree p={p} must satisfy 0 <= p <= q={ops.q}")
    d = shape.dim
    alphas = multi_indices(d, p)
    V, _ = _eval_eta(shape, p, ops.eta)
    if np.linalg.matrix_rank(V) < len(alphas):
        raise ConfigurationError("generalized Vandermonde matrix is rank deficient")
    M = V.T @ (ops.w[:, None] * V)
    orthonormal = bool(np.max(np.abs(M - np.eye(len(alphas)))) <= tol)
    r = ops.rules
    A1 = _psi1(p, r[0].nodes)[0]
    B2 = [_psi2(p, a1, r[1].nodes)[0] for a1 in range(p + 1)]
    B3 = [_psi3(p, s, r[2].nodes)[0] for s in range(p + 1)] if d == 3 else None
    col = {a: j for j, a in enumerate(alphas)}
    plan = {}
    if d == 2:
        plan["idx"] = [np.array([col[(a1, a2)] for a2 in range(p - a1 + 1)])
                       for a1 in range(p + 1)]
    else:
        pairs = [(a1, a2) for a1 in range(p + 1) for a2 in range(p - a1 + 1)]
        pid = {pr: k for k, pr in enumerate(pairs)}
        plan["n_pairs"] = len(pairs)
        plan["by_a1"] = [np.array([pid[(a1, a2)] for a2 in range(p - a1 + 1)])
                         for a1 in range(p + 1)]
        plan["by_s"] = []
        for s in range(p + 1):
            prs = [(a1, s - a1) for a1 in range(s + 1)]
            cols = np.array([[col[(a1, a2, a3)] for a3 in range(p - s + 1)] for a1, a2 in prs])
            plan["by_s"].append((np.array([pid[pr] for pr in prs]), cols))
    return ModalBasis(shape=shape, p=p, alphas=alphas, V=V, M=M, orthonormal=orthonormal,
                      tensor_shape=ops.tensor_shape, A1=A1, B2=B2, B3=B3, _plan=plan)


def _batch(x, n, what):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[-1] != n:
        raise ValueError(f"{what} has length {x.shape[-1]}, expected {n}")
    return x, single


def apply_V(basis: ModalBasis, c):
    """Sum-factorized modal-to-nodal map; accepts (Np,) or (K, Np)."""
    c, single = _batch(c, basis.n_modes, "modal vector")
    K = c.shape[0]
    plan = basis._plan
    if basis.shape is ElementShape.TRIANGLE:
        n2, _ = basis.tensor_shape
        T = np.empty((K, n2, basis.p + 1))
        for a1, idx in enumerate(plan["idx"]):
            T[:, :, a1] = c[:, idx] @ basis.B2[a1].T
        u = (T @ basis.A1.T).reshape(K, -1)
    else:
        n3, n2, _ = basis.tensor_shape
        S3 = np.empty((K, n3, plan["n_pairs"]))
        for s, (pids, cols) in enumerate(plan["by_s"]):
            S3[:, :, pids] = np.einsum("kjc,ic->kij", c[:, cols], basis.B3[s])
        S2 = np.empty((K, n3, n2, basis.p + 1))
        for a1, pids in enumerate(plan["by_a1"]):
            S2[..., a1] = S3[:, :, pids] @ basis.B2[a1].T
        u = (S2 @ basis.A1.T).reshape(K, -1)
    return u[0] if single else u


def apply_Vt(basis: ModalBasis, u):
    """Sum-factorized transpose, nodal-to-modal sums; accepts (Nq,) or (K, Nq)."""
    u, single = _batch(u, basis.n_nodes, "nodal vector")
    K = u.shape[0]
    plan = basis._plan
    out = np.empty((K, basis.n_modes))
    if basis.shape is ElementShape.TRIANGLE:
        T = u.reshape((K,) + basis.tensor_shape) @ basis.A1
        for a1, idx in enumerate(plan["idx"]):
            out[:, idx] = T[:, :, a1] @ basis.B2[a1]
    else:
        n3 = basis.tensor_shape[0]
        T = u.reshape((K,) + basis.tensor_shape) @ basis.A1
        S3 = np.empty((K, n3, plan["n_pairs"]))
        for a1, pids in enumerate(plan["by_a1"]):
            S3[:, :, pids] = T[..., a1] @ basis.B2[a1]
        for s, (pids, cols) in enumerate(plan["by_s"]):
            out[:, cols] = np.einsum("kip,ic->kpc", S3[:, :, pids], basis.B3[s])
    return out[0] if single else out


def modal_projection(basis: ModalBasis, w, u, jac=None):
    """Discrete L2 projection of nodal values onto the basis.

    With ``jac`` (per-node Jacobian values, optionally batched) the curved
    mass matrix ``V^T W J V`` is used.
    """
    u = np.asarray(u, dtype=float)
    if jac is None:
        rhs = apply_Vt(basis, w * u)
        if basis.orthonormal:
            return rhs
        return np.linalg.solve(basis.M, rhs.T).T
    jac = np.asarray(jac, dtype=float)
    wj = w * jac
    rhs = apply_Vt(basis, wj * u)
    V = basis.V
    if wj.ndim == 1:
        return np.linalg.solve(V.T @ (wj[:, None] * V), rhs)
    Mk = np.einsum("qi,kq,qj->kij", V, wj, V)
    return np.linalg.solve(Mk, rhs[..., None])[..., 0]
