"""Orthonormal Jacobi polynomials, Gauss-type rules and 1D Lagrange tools.

All polynomials are normalized with respect to the weight
``(1 - x)**a * (1 + x)**b`` on ``[-1, 1]``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from math import lgamma, exp, log

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import QuadratureError, ConfigurationError


class RuleKind(str, enum.Enum):
    GAUSS = "gauss"
    GAUSS_RADAU = "gauss_radau"
    GAUSS_LOBATTO = "gauss_lobatto"

    @property
    def delta(self) -> int:
        return {"gauss": 1, "gauss_radau": 0, "gauss_lobatto": -1}[self.value]


@dataclass(frozen=True)
class JacobiWeight:
    a: float = 0.0
    b: float = 0.0

    def __post_init__(self):
        if not (self.a > -1 and self.b > -1):
            raise ConfigurationError(
                f"Jacobi exponents must exceed -1, got a={self.a}, b={self.b}")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return (1.0 - x) ** self.a * (1.0 + x) ** self.b

    @property
    def is_legendre(self) -> bool:
        return self.a == 0 and self.b == 0

    def as_tuple(self):
        return (float(self.a), float(self.b))

    def total_mass(self) -> float:
        """Integral of the weight over [-1, 1]."""
        return exp(_log_mass(self.a, self.b))


LEGENDRE = JacobiWeight(0.0, 0.0)


def _log_mass(a, b):
    return ((a + b + 1) * log(2.0) + lgamma(a + 1) + lgamma(b + 1)
            - lgamma(a + b + 2))


@dataclass(frozen=True)
class QuadratureRule1D:
    nodes: np.ndarray
    weights: np.ndarray
    weight: JacobiWeight
    kind: RuleKind
    exactness_degree: int

    @property
    def n(self) -> int:
        return len(self.nodes)

    def integrate(self, values):
        return np.dot(self.weights, values)


def _recurrence(n, a, b):
    """Diagonal and off-diagonal of the Jacobi matrix for orthonormal P."""
    i = np.arange(n, dtype=float)
    diag = np.empty(n)
    s = 2 * i + a + b
    with np.errstate(divide="ignore", invalid="ignore"):
        diag[:] = (b * b - a * a) / (s * (s + 2))
    diag[0] = (b - a) / (a + b + 2)
    off = np.empty(max(n - 1, 0))
    for k in range(1, n):
        if k == 1:
            off[0] = 2.0 / (2 + a + b) * np.sqrt((a + 1) * (b + 1) / (a + b + 3))
        else:
            h = 2 * k + a + b
            off[k - 1] = 2.0 / h * np.sqrt(
                k * (k + a + b) * (k + a) * (k + b) / ((h - 1) * (h + 1)))
    return diag, off


def jacobi_table(nmax, weight, x):
    """Rows 0..nmax of orthonormal Jacobi polynomials at points x.

    Returns an array of shape ``(nmax + 1,) + x.shape``.
    """
    a, b = weight.a, weight.b
    x = np.asarray(x, dtype=float)
    out = np.empty((nmax + 1,) + x.shape)
    out[0] = exp(-0.5 * _log_mass(a, b))
    if nmax == 0:
        return out
    diag, off = _recurrence(nmax + 1, a, b)
    # x P_k = off[k] P_{k+1} + diag[k] P_k + off[k-1] P_{k-1}
    out[1] = (x - diag[0]) * out[0] / off[0]
    for k in range(1, nmax):
        out[k + 1] = ((x - diag[k]) * out[k] - off[k - 1] * out[k - 1]) / off[k]
    return out


def jacobi_eval(n, weight, x):
    """Orthonormal Jacobi polynomial of degree n evaluated at x."""
    if n < 0:
        raise ValueError("degree must be non-negative")
    return jacobi_table(n, weight, x)[n]


def jacobi_deriv(n, weight, x):
    """Derivative of the orthonormal Jacobi polynomial of degree n."""
    if n < 0:
        raise ValueError("degree must be non-negative")
    x = np.asarray(x, dtype=float)
    if n == 0:
        return np.zeros_like(x)
    shifted = JacobiWeight(weight.a + 1, weight.b + 1)
    return np.sqrt(n * (n + weight.a + weight.b + 1)) * jacobi_eval(n - 1, shifted, x)


def _gauss_nodes(n, weight):
    diag, off = _recurrence(n, weight.a, weight.b)
    if n == 1:
        nodes = diag.copy()
    else:
        nodes = eigh_tridiagonal(diag, off, eigvals_only=True)
    nodes = np.sort(nodes)
    # one Newton polish per node
    p = jacobi_eval(n, weight, nodes)
    dp = jacobi_deriv(n, weight, nodes)
    nodes = nodes - p / dp
    resid = np.abs(jacobi_eval(n, weight, nodes) / jacobi_deriv(n, weight, nodes))
    if (not np.all(np.isfinite(nodes)) or np.any(resid > 1e-10)
            or np.any(np.diff(nodes) <= 0) or nodes[0] <= -1 or nodes[-1] >= 1):
        raise QuadratureError(
            f"Gauss-Jacobi node solve failed for n={n}, weight={weight}")
    return nodes


def _christoffel_weights(nodes, weight):
    n = len(nodes)
    table = jacobi_table(n - 1, weight, nodes)
    return 1.0 / np.sum(table ** 2, axis=0)


def barycentric_weights(nodes):
    nodes = np.asarray(nodes, dtype=float)
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    return 1.0 / np.prod(diff, axis=1)


def lagrange_matrix(nodes, x):
    """L[i, j] = ell_j(x_i) for the Lagrange basis on ``nodes``."""
    nodes = np.asarray(nodes, dtype=float)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    lam = barycentric_weights(nodes)
    diff = x[:, None] - nodes[None, :]
    exact = diff == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        tmp = lam[None, :] / diff
        out = tmp / np.sum(tmp, axis=1, keepdims=True)
    rows = np.any(exact, axis=1)
    out[rows] = exact[rows].astype(float)
    return out


def lagrange_derivative_matrix(nodes):
    """D[i, j] = ell_j'(x_i) on the nodes themselves."""
    nodes = np.asarray(nodes, dtype=float)
    lam = barycentric_weights(nodes)
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    D = (lam[None, :] / lam[:, None]) / diff
    np.fill_diagonal(D, 0.0)
    np.fill_diagonal(D, -np.sum(D, axis=1))
    return D


def gauss_rule(n, weight=LEGENDRE, kind=RuleKind.GAUSS) -> QuadratureRule1D:
    """Jacobi-Gauss, left Jacobi-Gauss-Radau (node at -1) or Jacobi-Gauss-Lobatto."""
    kind = RuleKind(kind)
    if n < 1 or (kind is RuleKind.GAUSS_LOBATTO and n < 2):
        raise ConfigurationError(f"too few nodes ({n}) for a {kind.value} rule")
    if kind is RuleKind.GAUSS:
        nodes = _gauss_nodes(n, weight)
        weights = _christoffel_weights(nodes, weight)
        tau = 2 * n - 1
    else:
        if kind is RuleKind.GAUSS_RADAU:
            inner = (_gauss_nodes(n - 1, JacobiWeight(weight.a, weight.b + 1))
                     if n > 1 else np.empty(0))
            nodes = np.concatenate([[-1.0], inner])
            tau = 2 * n - 2
        else:
            inner = (_gauss_nodes(n - 2, JacobiWeight(weight.a + 1, weight.b + 1))
                     if n > 2 else np.empty(0))
            nodes = np.concatenate([[-1.0], inner, [1.0]])
            tau = 2 * n - 3
        # integrate the Lagrange basis exactly with an n-point Gauss rule
        ref = gauss_rule(n, weight, RuleKind.GAUSS)
        weights = ref.weights @ lagrange_matrix(nodes, ref.nodes)
    if np.any(weights <= 0) or not np.all(np.isfinite(weights)):
        raise QuadratureError(f"non-positive weights in {kind.value} rule, n={n}")
    return QuadratureRule1D(nodes=nodes, weights=weights, weight=weight,
                            kind=kind, exactness_degree=tau)
