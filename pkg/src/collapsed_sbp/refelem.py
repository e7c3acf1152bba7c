"""Collapsed-coordinate reference elements and tensor-product SBP operators."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from functools import reduce

import numpy as np

from .errors import ConfigurationError, DomainError
from .exact import multi_indices, reference_facet_integral, reference_volume_integral
from .jacobi import (
    LEGENDRE,
    JacobiWeight,
    QuadratureRule1D,
    RuleKind,
    gauss_rule,
    lagrange_derivative_matrix,
    lagrange_matrix,
)

_SQ2 = np.sqrt(2.0)
_SQ3 = np.sqrt(3.0)


class ElementShape(str, enum.Enum):
    TRIANGLE = "triangle"
    TETRAHEDRON = "tetrahedron"

    @property
    def dim(self) -> int:
        return 2 if self is ElementShape.TRIANGLE else 3

    @property
    def num_facets(self) -> int:
        return self.dim + 1

    @property
    def normals(self) -> np.ndarray:
        if self is ElementShape.TRIANGLE:
            return np.array([[0.0, -1.0], [1 / _SQ2, 1 / _SQ2], [-1.0, 0.0]])
        return np.array([[0.0, -1.0, 0.0], [1 / _SQ3] * 3,
                         [-1.0, 0.0, 0.0], [0.0, 0.0, -1.0]])

    @property
    def volume(self) -> float:
        return 2.0 if self is ElementShape.TRIANGLE else 4.0 / 3.0

    @property
    def facet_measures(self):
        if self is ElementShape.TRIANGLE:
            return (2.0, 2 * _SQ2, 2.0)
        return (2.0, 2 * _SQ3, 2.0, 2.0)

    @property
    def vertices(self) -> np.ndarray:
        return np.vstack([-np.ones(self.dim), -np.ones(self.dim) + 2 * np.eye(self.dim)])

    @property
    def collapsed_axes(self):
        """Zero-based collapsed-coordinate axes that must avoid eta = 1."""
        return (1,) if self is ElementShape.TRIANGLE else (1, 2)


def as_shape(shape) -> ElementShape:
    return shape if isinstance(shape, ElementShape) else ElementShape(str(shape).lower())


# --------------------------------------------------------------------------
# collapsed coordinate map


def collapsed_to_ref(shape, eta):
    """Map points from the square/cube onto the reference simplex."""
    shape = as_shape(shape)
    eta = np.asarray(eta, dtype=float)
    if shape is ElementShape.TRIANGLE:
        e1, e2 = eta[..., 0], eta[..., 1]
        return np.stack([0.5 * (1 + e1) * (1 - e2) - 1, e2], axis=-1)
    e1, e2, e3 = eta[..., 0], eta[..., 1], eta[..., 2]
    return np.stack([0.25 * (1 + e1) * (1 - e2) * (1 - e3) - 1,
                     0.5 * (1 + e2) * (1 - e3) - 1,
                     e3], axis=-1)


def ref_to_collapsed(shape, xi, tol=1e-14):
    """Inverse of :func:`collapsed_to_ref`; raises DomainError on the singular set."""
    shape = as_shape(shape)
    xi = np.asarray(xi, dtype=float)
    if shape is ElementShape.TRIANGLE:
        den = 1 - xi[..., 1]
        if np.any(np.abs(den) <= tol):
            raise DomainError("collapsed map is singular at the vertex xi = (-1, 1)")
        return np.stack([2 * (1 + xi[..., 0]) / den - 1, xi[..., 1]], axis=-1)
    den1 = -xi[..., 1] - xi[..., 2]
    den2 = 1 - xi[..., 2]
    if np.any(np.abs(den1) <= tol) or np.any(np.abs(den2) <= tol):
        raise DomainError("collapsed map is singular on the edge xi1 = -1, xi2 + xi3 = 0")
    return np.stack([2 * (1 + xi[..., 0]) / den1 - 1,
                     2 * (1 + xi[..., 1]) / den2 - 1,
                     xi[..., 2]], axis=-1)


def ref_to_collapsed_limit(shape, xi, tol=1e-12):
    """Like :func:`ref_to_collapsed`, but resolves singular points to eta = -1.

    Polynomials written in the warped tensor-product form are independent of
    the collapsed coordinate there, so this is only used for evaluating such
    polynomials at vertices and edges (e.g. mesh interpolation nodes).
    """
    shape = as_shape(shape)
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    eta = np.empty_like(xi)
    if shape is ElementShape.TRIANGLE:
        den = 1 - xi[:, 1]
        ok = np.abs(den) > tol
        eta[:, 0] = -1.0
        eta[ok, 0] = 2 * (1 + xi[ok, 0]) / den[ok] - 1
        eta[:, 1] = xi[:, 1]
        return eta
    den1 = -xi[:, 1] - xi[:, 2]
    den2 = 1 - xi[:, 2]
    ok1 = np.abs(den1) > tol
    ok2 = np.abs(den2) > tol
    eta[:, 0] = -1.0
    eta[ok1, 0] = 2 * (1 + xi[ok1, 0]) / den1[ok1] - 1
    eta[:, 1] = -1.0
    eta[ok2, 1] = 2 * (1 + xi[ok2, 1]) / den2[ok2] - 1
    eta[:, 2] = xi[:, 2]
    return eta


def collapsed_jacobian_inverse(shape, eta):
    """G[..., l, n] = d eta_l / d xi_n at collapsed points (eta != 1)."""
    shape = as_shape(shape)
    eta = np.asarray(eta, dtype=float)
    d = shape.dim
    G = np.zeros(eta.shape[:-1] + (d, d))
    if shape is ElementShape.TRIANGLE:
        e1, e2 = eta[..., 0], eta[..., 1]
        G[..., 0, 0] = 2 / (1 - e2)
        G[..., 0, 1] = (1 + e1) / (1 - e2)
        G[..., 1, 1] = 1.0
        return G
    e1, e2, e3 = eta[..., 0], eta[..., 1], eta[..., 2]
    c = (1 - e2) * (1 - e3)
    G[..., 0, 0] = 4 / c
    G[..., 0, 1] = 2 * (1 + e1) / c
    G[..., 0, 2] = 2 * (1 + e1) / c
    G[..., 1, 1] = 2 / (1 - e3)
    G[..., 1, 2] = (1 + e2) / (1 - e3)
    G[..., 2, 2] = 1.0
    return G


# --------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class RuleSpec:
    """A 1D rule family: weight exponents and kind; node count set by degree."""

    weight: JacobiWeight = LEGENDRE
    kind: RuleKind = RuleKind.GAUSS

    def build(self, degree) -> QuadratureRule1D:
        return gauss_rule(degree + 1, self.weight, self.kind)

    def to_dict(self):
        return {"a": self.weight.a, "b": self.weight.b, "kind": RuleKind(self.kind).value}

    @classmethod
    def from_dict(cls, data):
        return cls(JacobiWeight(data.get("a", 0.0), data.get("b", 0.0)),
                   RuleKind(data.get("kind", "gauss")))


LG = RuleSpec()
JG10 = RuleSpec(JacobiWeight(1.0, 0.0), RuleKind.GAUSS)


@dataclass(frozen=True)
class OperatorConfig:
    shape: ElementShape
    degrees: tuple
    facet_degrees: tuple
    volume_rules: tuple
    facet_rules: tuple
    strict: bool = True

    def __post_init__(self):
        object.__setattr__(self, "shape", as_shape(self.shape))
        d = self.shape.dim
        if len(self.degrees) != d or len(self.volume_rules) != d:
            raise ConfigurationError(f"{self.shape.value} needs {d} volume degrees and rules")
        if len(self.facet_degrees) != d - 1 or len(self.facet_rules) != d - 1:
            raise ConfigurationError(f"{self.shape.value} needs {d - 1} facet degrees and rules")
        if min(self.degrees) < 0 or min(self.facet_degrees) < 0:
            raise ConfigurationError("degrees must be non-negative")

    @property
    def q(self) -> int:
        return min(self.degrees)

    def to_dict(self):
        return {
            "shape": self.shape.value,
            "degrees": list(self.degrees),
            "facet_degrees": list(self.facet_degrees),
            "volume_rules": [r.to_dict() for r in self.volume_rules],
            "facet_rules": [r.to_dict() for r in self.facet_rules],
            "strict": self.strict,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(shape=as_shape(data["shape"]),
                   degrees=tuple(data["degrees"]),
                   facet_degrees=tuple(data["facet_degrees"]),
                   volume_rules=tuple(RuleSpec.from_dict(r) for r in data["volume_rules"]),
                   facet_rules=tuple(RuleSpec.from_dict(r) for r in data["facet_rules"]),
                   strict=data.get("strict", True))


def default_config(shape, q) -> OperatorConfig:
    """LG(q+1) everywhere on triangles; JG(1,0) in eta3/eta_f2 on tetrahedra."""
    shape = as_shape(shape)
    if shape is ElementShape.TRIANGLE:
        return OperatorConfig(shape, (q, q), (q,), (LG, LG), (LG,))
    return OperatorConfig(shape, (q, q, q), (q, q), (LG, LG, JG10), (LG, JG10))


def triangle_jacobi_config(q) -> OperatorConfig:
    """The (a2, b2) = (1, 0) triangle variant; exact but not SBP."""
    return OperatorConfig(ElementShape.TRIANGLE, (q, q), (q,), (LG, JG10), (LG,), strict=False)


def _tau(rule: QuadratureRule1D, a, b):
    if rule.weight.as_tuple() != (float(a), float(b)):
        return -1
    return rule.exactness_degree


def check_theorem_conditions(cfg: OperatorConfig, rules=None, frules=None):
    """Return (violations, routes) for the exactness hypotheses of the SBP theorem."""
    rules = rules or [r.build(q) for r, q in zip(cfg.volume_rules, cfg.degrees)]
    frules = frules or [r.build(q) for r, q in zip(cfg.facet_rules, cfg.facet_degrees)]
    violations = []
    routes = {}
    if cfg.shape is ElementShape.TRIANGLE:
        q1, q2 = cfg.degrees
        if _tau(rules[0], 0, 0) < 2 * q1:
            violations.append("tau_1^(0,0) >= 2 q_1")
        if _tau(rules[1], 0, 0) < 2 * q2:
            violations.append("tau_2^(0,0) >= 2 q_2")
        if _tau(frules[0], 0, 0) < 2 * max(q1, q2):
            violations.append("tau_f^(0,0) >= 2 max(q_1, q_2)")
        return violations, routes
    q1, q2, q3 = cfg.degrees
    if _tau(rules[0], 0, 0) < 2 * q1:
        violations.append("tau_1^(0,0) >= 2 q_1")
    if _tau(rules[1], 0, 0) < 2 * q2 + 1:
        violations.append("tau_2^(0,0) >= 2 q_2 + 1")
    if _tau(rules[2], 0, 0) >= 2 * q3 + 1:
        routes["eta3"] = "tau_3^(0,0) >= 2 q_3 + 1"
    elif _tau(rules[2], 1, 0) >= 2 * q3:
        routes["eta3"] = "tau_3^(1,0) >= 2 q_3"
    else:
        violations.append("tau_3^(0,0) >= 2 q_3 + 1 or tau_3^(1,0) >= 2 q_3")
    if _tau(frules[0], 0, 0) < 2 * max(q1, q2):
        violations.append("tau_f1^(0,0) >= 2 max(q_1, q_2)")
    qf = max(q2, q3)
    if _tau(frules[1], 0, 0) >= 2 * qf + 1:
        routes["eta_f2"] = "tau_f2^(0,0) >= 2 max(q_2, q_3) + 1"
    elif _tau(frules[1], 1, 0) >= 2 * qf:
        routes["eta_f2"] = "tau_f2^(1,0) >= 2 max(q_2, q_3)"
    else:
        violations.append("tau_f2^(0,0) >= 2 max(q_2, q_3) + 1 or "
                          "tau_f2^(1,0) >= 2 max(q_2, q_3)")
    return violations, routes


# --------------------------------------------------------------------------
# operator set


@dataclass
class SBPOperatorSet:
    config: OperatorConfig
    rules: list                 # 1D volume rules per collapsed direction
    facet_rules: list
    eta: np.ndarray             # (Nq, d) collapsed volume nodes, sigma order
    xi: np.ndarray              # (Nq, d)
    multi_index: np.ndarray     # (Nq, d), sigma^{-1}
    w: np.ndarray               # (Nq,) diagonal of W
    D: list                     # d dense (Nq, Nq)
    Q: list
    E: list
    R: list                     # Nf dense (Nqf, Nq)
    B: list                     # Nf vectors (Nqf,)
    facet_eta: list             # Nf arrays (Nqf, d)
    facet_xi: list
    facet_multi_index: np.ndarray
    D1d: list                   # 1D Lagrange derivative matrices per direction
    R_factors: list             # per facet: per-axis 1D evaluation matrices
    G: np.ndarray               # (Nq, d, d) d eta_l / d xi_n
    violations: tuple = ()
    routes: dict = field(default_factory=dict)

    @property
    def shape(self) -> ElementShape:
        return self.config.shape

    @property
    def dim(self) -> int:
        return self.shape.dim

    @property
    def q(self) -> int:
        return self.config.q

    @property
    def n_nodes(self) -> int:
        return len(self.w)

    @property
    def n_facet_nodes(self) -> int:
        return len(self.B[0])

    @property
    def tensor_shape(self):
        """Array shape (n_d, ..., n_1) for sum-factorized volume data."""
        return tuple(r.n for r in self.rules[::-1])

    @property
    def facet_tensor_shape(self):
        return [tuple(A.shape[0] for A in fac[::-1]) for fac in self.R_factors]

    @property
    def W(self) -> np.ndarray:
        return np.diag(self.w)

    @property
    def sbp_guaranteed(self) -> bool:
        return not self.violations

    def to_json_dict(self, include=None):
        """Documented export container; matrices are row-major nested lists."""
        def mat(A):
            A = np.asarray(A)
            return {"rows": int(A.shape[0]), "cols": int(A.shape[1]),
                    "data": A.ravel(order="C").tolist()}

        out = {
            "format": "collapsed-sbp-operators/1",
            "config": self.config.to_dict(),
            "n_nodes": self.n_nodes,
            "volume_nodes": self.xi.tolist(),
            "collapsed_volume_nodes": self.eta.tolist(),
            "volume_weights": self.w.tolist(),
            "volume_ordering": self.multi_index.tolist(),
            "facet_ordering": self.facet_multi_index.tolist(),
            "facet_nodes": [x.tolist() for x in self.facet_xi],
            "facet_weights": [b.tolist() for b in self.B],
            "normals": self.shape.normals.tolist(),
            "D": [mat(D) for D in self.D],
            "Q": [mat(Q) for Q in self.Q],
            "E": [mat(E) for E in self.E],
            "R": [mat(R) for R in self.R],
            "theorem_violations": list(self.violations),
            "theorem_routes": dict(self.routes),
        }
        if include:
            out.update(include)
        return out

    def to_json(self, path, include=None):
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(include), fh)


def _tensor_points(arrays):
    """Collapsed tensor grid with the first direction fastest."""
    grids = np.meshgrid(*arrays[::-1], indexing="ij")
    return np.stack([g.ravel() for g in grids[::-1]], axis=1)


def _kron(mats):
    """kron(A_d, ..., A_1) for a list ordered by direction (A_1 first)."""
    return reduce(np.kron, mats[::-1])


def _collapse_factor(shape, axis, x):
    if axis == 0:
        return np.ones_like(x)
    if axis == 1:
        return 0.5 * (1 - x)
    return 0.25 * (1 - x) ** 2


def _facet_layout(shape, frules):
    """Collapsed facet nodes, raw weights and Lagrange evaluation points."""
    if shape is ElementShape.TRIANGLE:
        (rf,) = frules
        ef = rf.nodes
        base_w = rf.weights / rf.weight(ef)
        one, m1 = np.ones_like(ef), -np.ones_like(ef)
        etas = [np.stack([ef, m1], 1), np.stack([one, ef], 1), np.stack([m1, ef], 1)]
        scales = [1.0, _SQ2, 1.0]
        # evaluation points per axis for each facet (None = endpoint value)
        eval_pts = [[ef, [-1.0]], [[1.0], ef], [[-1.0], ef]]
        weights = [s * base_w for s in scales]
        idx = np.arange(len(ef))[:, None]
        return etas, weights, eval_pts, idx
    rf1, rf2 = frules
    pts = _tensor_points([rf1.nodes, rf2.nodes])
    a, b = pts[:, 0], pts[:, 1]
    w1 = rf1.weights / rf1.weight(rf1.nodes)
    w2 = rf2.weights * 0.5 * (1 - rf2.nodes) / rf2.weight(rf2.nodes)
    base_w = np.outer(w2, w1).ravel()
    one, m1 = np.ones_like(a), -np.ones_like(a)
    etas = [np.stack([a, m1, b], 1), np.stack([one, a, b], 1),
            np.stack([m1, a, b], 1), np.stack([a, b, m1], 1)]
    scales = [1.0, _SQ3, 1.0, 1.0]
    f1, f2 = rf1.nodes, rf2.nodes
    eval_pts = [[f1, [-1.0], f2], [[1.0], f1, f2], [[-1.0], f1, f2], [f1, f2, [-1.0]]]
    weights = [s * base_w for s in scales]
    idx = _tensor_points([np.arange(len(f1)), np.arange(len(f2))]).astype(int)
    return etas, weights, eval_pts, idx


def facet_quadrature(shape, zeta, cfg: OperatorConfig):
    """Reference-coordinate nodes and weights on facet ``zeta`` (1-based)."""
    shape = as_shape(shape)
    frules = [r.build(q) for r, q in zip(cfg.facet_rules, cfg.facet_degrees)]
    etas, weights, _, _ = _facet_layout(shape, frules)
    return collapsed_to_ref(shape, etas[zeta - 1]), weights[zeta - 1]


def build_operators(cfg: OperatorConfig) -> SBPOperatorSet:
    shape = cfg.shape
    d = shape.dim
    rules = [r.build(q) for r, q in zip(cfg.volume_rules, cfg.degrees)]
    frules = [r.build(q) for r, q in zip(cfg.facet_rules, cfg.facet_degrees)]
    violations, routes = check_theorem_conditions(cfg, rules, frules)
    if violations and cfg.strict:
        raise ConfigurationError(
            "SBP exactness conditions violated: " + "; ".join(violations))
    for axis in shape.collapsed_axes:
        if np.any(rules[axis].nodes >= 1.0):
            raise ConfigurationError(
                f"volume rule in eta_{axis + 1} has a node at the collapsed coordinate eta = 1")

    eta = _tensor_points([r.nodes for r in rules])
    xi = collapsed_to_ref(shape, eta)
    mi = _tensor_points([np.arange(r.n) for r in rules]).astype(int)

    w1d = [r.weights * _collapse_factor(shape, m, r.nodes) / r.weight(r.nodes)
           for m, r in enumerate(rules)]
    w = _kron([wm[None, :] for wm in w1d]).ravel()

    D1d = [lagrange_derivative_matrix(r.nodes) for r in rules]
    eyes = [np.eye(r.n) for r in rules]
    Dhat = []
    for l in range(d):
        mats = list(eyes)
        mats[l] = D1d[l]
        Dhat.append(_kron(mats))
    G = collapsed_jacobian_inverse(shape, eta)
    D = [sum(G[:, l, n][:, None] * Dhat[l] for l in range(d)) for n in range(d)]
    Q = [w[:, None] * Dn for Dn in D]

    fetas, fweights, eval_pts, fidx = _facet_layout(shape, frules)
    R_factors, R = [], []
    for pts in eval_pts:
        facs = [lagrange_matrix(r.nodes, np.asarray(p, dtype=float))
                for r, p in zip(rules, pts)]
        R_factors.append(facs)
        R.append(_kron(facs))
    normals = shape.normals
    E = [sum(normals[z, m] * (R[z].T * fweights[z]) @ R[z] for z in range(shape.num_facets))
         for m in range(d)]

    return SBPOperatorSet(
        config=cfg, rules=rules, facet_rules=frules, eta=eta, xi=xi, multi_index=mi,
        w=w, D=D, Q=Q, E=E, R=R, B=fweights, facet_eta=fetas,
        facet_xi=[collapsed_to_ref(shape, e) for e in fetas], facet_multi_index=fidx,
        D1d=D1d, R_factors=R_factors, G=G, violations=tuple(violations), routes=routes)


# --------------------------------------------------------------------------
# verification


@dataclass
class SBPReport:
    q: int
    sbp_residual: float
    volume_quadrature_residual: float
    differentiation_residual: float
    extrapolation_residual: float
    facet_condition_residual: float
    decomposition_residual: float
    weights_positive: bool
    sbp_guaranteed: bool
    violations: tuple

    def passed(self, sbp_tol=1e-12, acc_tol=1e-9):
        return (self.weights_positive and self.sbp_residual <= sbp_tol
                and self.volume_quadrature_residual <= acc_tol
                and self.differentiation_residual <= acc_tol
                and self.extrapolation_residual <= acc_tol
                and self.facet_condition_residual <= acc_tol)

    def rows(self):
        return [
            ("sbp_identity", self.sbp_residual),
            ("volume_quadrature", self.volume_quadrature_residual),
            ("differentiation", self.differentiation_residual),
            ("extrapolation", self.extrapolation_residual),
            ("facet_condition", self.facet_condition_residual),
            ("boundary_decomposition", self.decomposition_residual),
        ]


def _monomials(xi, alphas):
    return np.stack([np.prod(xi ** np.asarray(a)[None, :], axis=1) for a in alphas], axis=1)


def _monomial_derivs(xi, alphas, m):
    cols = []
    for a in alphas:
        a = np.asarray(a)
        if a[m] == 0:
            cols.append(np.zeros(len(xi)))
            continue
        b = a.copy()
        b[m] -= 1
        cols.append(a[m] * np.prod(xi ** b[None, :], axis=1))
    return np.stack(cols, axis=1)


def verify_sbp(ops: SBPOperatorSet) -> SBPReport:
    """Check every property of a diagonal-norm SBP operator of degree q."""
    d, q = ops.dim, ops.q
    shape = ops.shape
    sbp = max(np.max(np.abs(Q + Q.T - E)) for Q, E in zip(ops.Q, ops.E))

    deg_vol = max(2 * q - 1, 0)
    vol = 0.0
    for a in multi_indices(d, deg_vol):
        exact = float(reference_volume_integral(a))
        approx = ops.w @ np.prod(ops.xi ** np.asarray(a)[None, :], axis=1)
        vol = max(vol, abs(approx - exact) / max(1.0, abs(exact)))

    alphas = multi_indices(d, q)
    V = _monomials(ops.xi, alphas)
    diff = 0.0
    for m in range(d):
        dV = _monomial_derivs(ops.xi, alphas, m)
        err = np.abs(ops.D[m] @ V - dV) / np.maximum(1.0, np.abs(dV).max(axis=0))
        diff = max(diff, float(err.max()))

    extrap = 0.0
    for z in range(shape.num_facets):
        Vf = _monomials(ops.facet_xi[z], alphas)
        extrap = max(extrap, float(np.max(np.abs(ops.R[z] @ V - Vf))))

    # bilinear facet condition u^T E v against exact boundary integrals
    facet = 0.0
    normals = shape.normals
    for m in range(d):
        lhs = V.T @ ops.E[m] @ V
        exact = np.zeros_like(lhs)
        for i, a in enumerate(alphas):
            for j, b in enumerate(alphas):
                g = tuple(x + y for x, y in zip(a, b))
                exact[i, j] = sum(normals[z, m] * reference_facet_integral(z + 1, g)
                                  for z in range(shape.num_facets) if normals[z, m] != 0)
        facet = max(facet, float(np.max(np.abs(lhs - exact))))

    decomp = max(
        np.max(np.abs(ops.E[m] - sum(normals[z, m] * (ops.R[z].T * ops.B[z]) @ ops.R[z]
                                     for z in range(shape.num_facets))))
        for m in range(d))
    return SBPReport(q=q, sbp_residual=float(sbp), volume_quadrature_residual=float(vol),
                     differentiation_residual=diff, extrapolation_residual=extrap,
                     facet_condition_residual=facet, decomposition_residual=float(decomp),
                     weights_positive=bool(np.all(ops.w > 0)),
                     sbp_guaranteed=ops.sbp_guaranteed, violations=ops.violations)
