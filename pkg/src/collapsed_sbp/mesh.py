"""Periodic curvilinear simplex meshes of the unit square/cube."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import permutations, product

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .errors import MeshError, OrientationError, TopologyError
from .exact import multi_indices
from .jacobi import RuleKind, gauss_rule
from .pkd import grad_vandermonde, vandermonde
from .refelem import ElementShape, SBPOperatorSet, as_shape, build_operators, default_config

DEFAULT_WARP = 1.0 / 16.0


def mapping_interpolation_nodes(shape, p_g):
    """Lattice nodes on the reference simplex with Gauss-Lobatto points on edges.

    Vertices are included, edge nodes sit at Legendre-Gauss-Lobatto points,
    and the remaining nodes are equispaced in barycentric coordinates.  For
    p_g <= 3 (triangle) and p_g <= 2 (tetrahedron) this is the usual
    warp-and-blend set, since edges are Lobatto and the single face node is
    the centroid.
    """
    shape = as_shape(shape)
    if p_g < 1:
        raise ValueError("mapping degree must be at least 1")
    idx = np.array(multi_indices(shape.dim, p_g), dtype=float)
    lam = np.hstack([p_g - idx.sum(axis=1, keepdims=True), idx]) / p_g
    lobatto = 0.5 * (gauss_rule(p_g + 1, kind=RuleKind.GAUSS_LOBATTO).nodes + 1) if p_g > 1 else None
    for row in lam:
        nz = np.flatnonzero(row > 1e-14)
        if len(nz) == 2:
            k = int(round(row[nz[1]] * p_g))
            row[nz[1]], row[nz[0]] = lobatto[k], 1.0 - lobatto[k]
    return -1.0 + 2.0 * lam[:, 1:]


def warp_2d(x, eps=DEFAULT_WARP):
    x = np.asarray(x, dtype=float)
    x1, x2 = x[..., 0], x[..., 1]
    t1 = x1 + eps * np.cos(np.pi * (x1 - 0.5)) * np.cos(3 * np.pi * (x2 - 0.5))
    t2 = x2 + eps * np.sin(4 * np.pi * (t1 - 0.5)) * np.cos(np.pi * (x2 - 0.5))
    return np.stack([t1, t2], axis=-1)


def warp_3d(x, eps=DEFAULT_WARP):
    """Sequential update: x2 first, then x1 from the new x2, then x3 from both."""
    x = np.asarray(x, dtype=float)
    x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
    c3 = np.cos(np.pi * (x3 - 0.5))
    t2 = x2 + eps * np.cos(3 * np.pi * (x1 - 0.5)) * np.cos(np.pi * (x2 - 0.5)) * c3
    t1 = x1 + eps * np.cos(np.pi * (x1 - 0.5)) * np.sin(4 * np.pi * (t2 - 0.5)) * c3
    t3 = x3 + eps * np.cos(np.pi * (t1 - 0.5)) * np.cos(2 * np.pi * (t2 - 0.5)) * c3
    return np.stack([t1, t2, t3], axis=-1)


def _templates(shape):
    """Local vertex offsets (in units of h) for the simplices of one cell."""
    if shape is ElementShape.TRIANGLE:
        return [np.array([[0, 0], [1, 0], [1, 1]]), np.array([[0, 0], [1, 1], [0, 1]])]
    out = []
    for perm in permutations(range(3)):
        v = np.zeros(3, dtype=int)
        path = [v.copy()]
        for axis in perm:
            v[axis] += 1
            path.append(v.copy())
        path = np.array(path)
        # vertices sit in path order so each face collapses onto its highest vertex
        e = path[1:] - path[0]
        if np.linalg.det(e) < 0:
            path[[0, 1]] = path[[1, 0]]
        out.append(path)
    return out


@dataclass
class Connectivity:
    """Facet pairing: ``u_plus[k, z, i] = u_minus[partner[k, z], partner_facet[k, z], perm[k, z, i]]``."""

    partner: np.ndarray
    partner_facet: np.ndarray
    perm: np.ndarray
    max_mismatch: float

    @property
    def n_interfaces(self) -> int:
        return self.partner.size // 2

    def to_dict(self):
        return {"partner": self.partner.tolist(), "partner_facet": self.partner_facet.tolist(),
                "perm": self.perm.tolist(), "max_mismatch": self.max_mismatch}

    @classmethod
    def from_dict(cls, data):
        return cls(np.array(data["partner"], dtype=int), np.array(data["partner_facet"], dtype=int),
                   np.array(data["perm"], dtype=int), float(data["max_mismatch"]))


@dataclass
class Mesh:
    shape: ElementShape
    M: int
    p_g: int
    eps: float
    vertex_index: np.ndarray    # (K, d+1, d) integer lattice indices (unwrapped)
    coeffs: np.ndarray          # (K, Np_g, d) PKD coefficients of the mapping
    connectivity: Connectivity | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def dim(self) -> int:
        return self.shape.dim

    @property
    def n_elements(self) -> int:
        return len(self.coeffs)

    @property
    def h(self) -> float:
        return 1.0 / self.M

    @property
    def vertices(self) -> np.ndarray:
        return self.vertex_index / self.M

    def map_points(self, xi):
        """Physical coordinates (K, N, d) of reference points."""
        V = vandermonde(self.shape, self.p_g, xi, allow_singular=True)
        return np.einsum("nj,kjm->knm", V, self.coeffs)

    def jacobian_matrices(self, xi):
        """A[k, i, m, n] = d x_m / d xi_n at reference points."""
        dV = grad_vandermonde(self.shape, self.p_g, xi)
        return np.einsum("nij,kjm->kimn", dV, self.coeffs)

    def to_json_dict(self):
        return {
            "format": "collapsed-sbp-mesh/1",
            "shape": self.shape.value, "M": self.M, "p_g": self.p_g, "eps": self.eps,
            "vertices": self.vertices.tolist(),
            "element_vertex_index": self.vertex_index.tolist(),
            "mapping_coefficients": self.coeffs.tolist(),
            "connectivity": None if self.connectivity is None else self.connectivity.to_dict(),
        }

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh)

    @classmethod
    def from_json_dict(cls, data):
        conn = data.get("connectivity")
        return cls(shape=as_shape(data["shape"]), M=int(data["M"]), p_g=int(data["p_g"]),
                   eps=float(data["eps"]),
                   vertex_index=np.array(data["element_vertex_index"], dtype=int),
                   coeffs=np.array(data["mapping_coefficients"], dtype=float),
                   connectivity=None if conn is None else Connectivity.from_dict(conn))

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))


def _check_points(shape, p_g):
    ops = build_operators(default_config(shape, max(4, 2 * p_g)))
    return np.vstack([ops.xi] + ops.facet_xi)


def generate_mesh(shape, M, p_g, eps=DEFAULT_WARP, check=True) -> Mesh:
    """Split an M^d Cartesian grid into simplices and warp the mapping nodes."""
    shape = as_shape(shape)
    if M < 1 or p_g < 1:
        raise MeshError(f"need M >= 1 and p_g >= 1, got M={M}, p_g={p_g}")
    d = shape.dim
    verts = []
    for cell in product(range(M), repeat=d):
        for tpl in _templates(shape):
            verts.append(np.asarray(cell)[None, :] + tpl)
    vidx = np.array(verts, dtype=int)
    x0 = vidx / M
    edges = x0[:, 1:, :] - x0[:, :1, :]
    det = np.linalg.det(np.transpose(edges, (0, 2, 1)))
    if np.any(det <= 0):
        raise OrientationError(f"element {int(np.argmin(det))} is not positively oriented")

    xi = mapping_interpolation_nodes(shape, p_g)
    lam = (xi + 1.0) / 2.0
    X = x0[:, :1, :] + np.einsum("nm,kmj->knj", lam, edges)
    if eps != 0.0:
        X = warp_2d(X, eps) if d == 2 else warp_3d(X, eps)
    Vi = vandermonde(shape, p_g, xi, allow_singular=True)
    lu = lu_factor(Vi)
    K, Np = X.shape[0], X.shape[1]
    coeffs = lu_solve(lu, X.transpose(1, 0, 2).reshape(Np, -1)).reshape(Np, K, d)
    mesh = Mesh(shape=shape, M=M, p_g=p_g, eps=float(eps), vertex_index=vidx,
                coeffs=np.ascontiguousarray(coeffs.transpose(1, 0, 2)))
    if check:
        jac = np.linalg.det(mesh.jacobian_matrices(_check_points(shape, p_g)))
        bad = np.min(jac, axis=1)
        if np.any(bad <= 0):
            k = int(np.argmin(bad))
            raise MeshError(f"non-positive Jacobian {bad[k]:.3e} in element {k} after warping")
    return mesh


_FACET_VERTICES = {
    ElementShape.TRIANGLE: [(0, 1), (1, 2), (2, 0)],
    ElementShape.TETRAHEDRON: [(0, 1, 3), (1, 2, 3), (0, 2, 3), (0, 1, 2)],
}


def facet_vertices(shape):
    """Local vertex indices of each reference facet."""
    return _FACET_VERTICES[as_shape(shape)]


def build_connectivity(mesh: Mesh, ops: SBPOperatorSet, tol_factor=1e-10) -> Connectivity:
    """Pair facets across the periodic mesh and align their quadrature nodes."""
    shape = mesh.shape
    if ops.shape is not shape:
        raise TopologyError("operator shape does not match mesh shape")
    d, K, Nf = shape.dim, mesh.n_elements, shape.num_facets
    modulus = d * mesh.M
    owners = {}
    for k in range(K):
        for z, fv in enumerate(facet_vertices(shape)):
            key = tuple(np.sum(mesh.vertex_index[k, list(fv)], axis=0) % modulus)
            owners.setdefault(key, []).append((k, z))
    partner = -np.ones((K, Nf), dtype=int)
    partner_facet = -np.ones((K, Nf), dtype=int)
    for key, sides in owners.items():
        if len(sides) != 2:
            raise TopologyError(f"facet with centroid key {key} has {len(sides)} sides")
        (k1, z1), (k2, z2) = sides
        partner[k1, z1], partner_facet[k1, z1] = k2, z2
        partner[k2, z2], partner_facet[k2, z2] = k1, z1

    xf = np.stack([mesh.map_points(x) for x in ops.facet_xi], axis=1)  # (K, Nf, Nqf, d)
    Nqf = xf.shape[2]
    tol = tol_factor * mesh.h
    perm = np.empty((K, Nf, Nqf), dtype=int)
    worst = 0.0
    for k in range(K):
        for z in range(Nf):
            own = xf[k, z]
            other = xf[partner[k, z], partner_facet[k, z]]
            diff = other[None, :, :] - own[:, None, :]
            diff -= np.round(diff)
            dist = np.linalg.norm(diff, axis=-1)
            j = np.argmin(dist, axis=1)
            err = dist[np.arange(Nqf), j]
            if np.max(err) > tol:
                raise OrientationError(
                    f"facet nodes of element {k} facet {z + 1} do not align "
                    f"(mismatch {np.max(err):.3e})")
            if len(np.unique(j)) != Nqf:
                raise OrientationError(f"facet node matching of element {k} facet {z + 1} "
                                       "is not a permutation")
            perm[k, z] = j
            worst = max(worst, float(np.max(err)))
    conn = Connectivity(partner=partner, partner_facet=partner_facet, perm=perm,
                        max_mismatch=worst)
    mesh.connectivity = conn
    return conn
