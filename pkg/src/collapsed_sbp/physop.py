"""Geometric factors, split-form physical SBP operators and the weight-adjusted inverse."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, GeometryError
from .mesh import Mesh
from .pkd import ModalBasis, apply_V, apply_Vt
from .refelem import SBPOperatorSet


class Algorithm(str, enum.Enum):
    REFERENCE_FUSED = "fused"
    PHYSICAL_PRECOMPUTED = "precomputed"


# --------------------------------------------------------------------------
# sum-factorized reference kernels on batched nodal data (K, Nq)


def _apply_axis(U, A, axis):
    """Apply matrix A along collapsed direction ``axis`` (0 = eta1, the last array axis)."""
    ax = U.ndim - 1 - axis
    return np.moveaxis(np.tensordot(U, A, axes=([ax], [1])), -1, ax)


def apply_dhat(ops: SBPOperatorSet, u, axis, transpose=False):
    K = u.shape[0]
    A = ops.D1d[axis].T if transpose else ops.D1d[axis]
    U = u.reshape((K,) + ops.tensor_shape)
    return _apply_axis(U, A, axis).reshape(K, -1)


def apply_R(ops: SBPOperatorSet, u):
    """Extrapolate (K, Nq) volume data to all facets: returns (K, Nf, Nqf)."""
    K = u.shape[0]
    U = u.reshape((K,) + ops.tensor_shape)
    out = []
    for facs in ops.R_factors:
        T = U
        for axis, A in enumerate(facs):
            T = _apply_axis(T, A, axis)
        out.append(T.reshape(K, -1))
    return np.stack(out, axis=1)


def apply_Rt(ops: SBPOperatorSet, g):
    """Transpose of :func:`apply_R`: (K, Nf, Nqf) facet data lifted to (K, Nq)."""
    K = g.shape[0]
    acc = np.zeros((K,) + ops.tensor_shape)
    for z, facs in enumerate(ops.R_factors):
        T = g[:, z].reshape((K,) + tuple(A.shape[0] for A in facs[::-1]))
        for axis, A in enumerate(facs):
            T = _apply_axis(T, A.T, axis)
        acc += T
    return acc.reshape(K, -1)


# --------------------------------------------------------------------------
# geometry


def _adjugate(A):
    """Adjugate of (..., d, d) matrices, i.e. det(A) * inv(A)."""
    d = A.shape[-1]
    if d == 2:
        adj = np.empty_like(A)
        adj[..., 0, 0] = A[..., 1, 1]
        adj[..., 0, 1] = -A[..., 0, 1]
        adj[..., 1, 0] = -A[..., 1, 0]
        adj[..., 1, 1] = A[..., 0, 0]
        return adj
    cols = [A[..., :, n] for n in range(3)]
    return np.stack([np.cross(cols[1], cols[2]), np.cross(cols[2], cols[0]),
                     np.cross(cols[0], cols[1])], axis=-2)


@dataclass
class ElementGeometry:
    """Geometric factors for all elements of a mesh (leading axis = element)."""

    x: np.ndarray       # (K, Nq, d) physical volume nodes
    J: np.ndarray       # (K, Nq)
    Lam: np.ndarray     # (K, Nq, d, d), Lam[..., l, m] = J d xi_l / d x_m
    xf: np.ndarray      # (K, Nf, Nqf, d)
    Jf: np.ndarray      # (K, Nf, Nqf)
    N: np.ndarray       # (K, Nf, Nqf, d) unit outward normals
    JN: np.ndarray      # (K, Nf, Nqf, d) J_f N, straight from Nanson's formula
    Lam_f: np.ndarray   # (K, Nf, Nqf, d, d)
    A_f: np.ndarray     # (K, Nf, Nqf, d, d) dx/dxi at facet nodes

    @property
    def n_elements(self) -> int:
        return self.J.shape[0]

    def element(self, k) -> "ElementGeometry":
        sl = slice(k, k + 1)
        return ElementGeometry(self.x[sl], self.J[sl], self.Lam[sl], self.xf[sl], self.Jf[sl],
                               self.N[sl], self.JN[sl], self.Lam_f[sl], self.A_f[sl])


def compute_geometry(mesh: Mesh, ops: SBPOperatorSet) -> ElementGeometry:
    """Analytic geometric factors at volume and facet nodes via Nanson's formula."""
    A = mesh.jacobian_matrices(ops.xi)
    J = np.linalg.det(A)
    if np.any(J <= 0):
        k = int(np.argmin(np.min(J, axis=1)))
        raise GeometryError(f"non-positive Jacobian in element {k}")
    Lam = _adjugate(A)
    xf, Jf, N, JN, Lam_f, A_f = [], [], [], [], [], []
    normals = ops.shape.normals
    for z, xz in enumerate(ops.facet_xi):
        Az = mesh.jacobian_matrices(xz)
        Lz = _adjugate(Az)
        if np.any(np.linalg.det(Az) <= 0):
            raise GeometryError(f"non-positive Jacobian on facet {z + 1}")
        jn = np.einsum("kilm,l->kim", Lz, normals[z])
        jf = np.linalg.norm(jn, axis=-1)
        xf.append(mesh.map_points(xz))
        Jf.append(jf)
        N.append(jn / jf[..., None])
        JN.append(jn)
        Lam_f.append(Lz)
        A_f.append(Az)
    return ElementGeometry(x=mesh.map_points(ops.xi), J=J, Lam=Lam, xf=np.stack(xf, 1),
                           Jf=np.stack(Jf, 1), N=np.stack(N, 1), JN=np.stack(JN, 1),
                           Lam_f=np.stack(Lam_f, 1),
                           A_f=np.stack(A_f, 1))


def metric_degree_ok(d, p, p_g) -> bool:
    """Mapping degree bound under which the discrete metric identities hold."""
    return p_g <= (p + 1 if d == 2 else p // 2 + 1)


def check_metric_degree(d, p, p_g, allow_violation=False):
    if not metric_degree_ok(d, p, p_g) and not allow_violation:
        bound = "p + 1" if d == 2 else "floor(p/2) + 1"
        raise ConfigurationError(
            f"mapping degree p_g={p_g} exceeds {bound} for p={p} in {d}D; "
            "the discrete metric identities would not hold")


# --------------------------------------------------------------------------
# physical operators


@dataclass
class PhysicalOperatorSet:
    algorithm: Algorithm
    ops: SBPOperatorSet
    geom: ElementGeometry
    F: np.ndarray           # (K, d_l, d_m, Nq) fused 1/2 W (d eta/d xi) Lam
    BJf: np.ndarray         # (K, Nf, Nqf)
    BJN: np.ndarray         # (K, Nf, Nqf, d) B J_f N
    inv_wj: np.ndarray      # (K, Nq)
    Q: np.ndarray | None = None   # (K, d, Nq, Nq) dense split-form operators
    E: np.ndarray | None = None

    def apply_Q(self, m, v):
        """Q^(k,m) v for batched nodal data via the fused factors."""
        ops = self.ops
        out = np.zeros_like(v)
        for l in range(ops.dim):
            f = self.F[:, l, m]
            out += f * apply_dhat(ops, v, l) - apply_dhat(ops, f * v, l, transpose=True)
        Rv = apply_R(ops, v)
        out += apply_Rt(ops, 0.5 * self.BJN[..., m] * Rv)
        return out

    def metric_identity_residual(self) -> float:
        """max |D^(k,m) 1| over elements and directions."""
        one = np.ones_like(self.inv_wj)
        return max(float(np.max(np.abs(self.inv_wj * self.apply_Q(m, one))))
                   for m in range(self.ops.dim))

    def sbp_residual(self) -> float:
        if self.Q is None:
            raise ConfigurationError("dense operators were not assembled")
        return float(np.max(np.abs(self.Q + np.swapaxes(self.Q, -1, -2) - self.E)))


def _dense_physical(ops: SBPOperatorSet, geom: ElementGeometry):
    d, w = ops.dim, ops.w
    K = geom.n_elements
    Nq = ops.n_nodes
    Q = np.zeros((K, d, Nq, Nq))
    E = np.zeros((K, d, Nq, Nq))
    WD = [w[:, None] * D for D in ops.D]
    for m in range(d):
        for z, R in enumerate(ops.R):
            bjn = ops.B[z] * geom.JN[:, z, :, m]
            E[:, m] += np.einsum("fi,kf,fj->kij", R, bjn, R)
        for l in range(d):
            lam = geom.Lam[:, :, l, m]
            Q[:, m] += 0.5 * (lam[:, :, None] * WD[l][None] - (ops.D[l].T[None] * w * lam[:, None, :]))
        Q[:, m] += 0.5 * E[:, m]
    return Q, E


def build_physical_operators(geom: ElementGeometry, ops: SBPOperatorSet,
                             algorithm=Algorithm.REFERENCE_FUSED, dense=None) -> PhysicalOperatorSet:
    """Split-form operators in fused-diagonal form, optionally with dense matrices."""
    algorithm = Algorithm(algorithm)
    F = 0.5 * ops.w[None, None, None, :] * np.einsum("iln,kinm->klmi", ops.G, geom.Lam)
    B = np.stack(ops.B, 0)[None]
    pos = PhysicalOperatorSet(algorithm=algorithm, ops=ops, geom=geom, F=F, BJf=B * geom.Jf,
                              BJN=B[..., None] * geom.JN,
                              inv_wj=1.0 / (ops.w[None, :] * geom.J))
    if dense or (dense is None and algorithm is Algorithm.PHYSICAL_PRECOMPUTED):
        pos.Q, pos.E = _dense_physical(ops, geom)
    return pos


def project_jacobian(geom: ElementGeometry, basis: ModalBasis, w) -> np.ndarray:
    """Degree-p L2 projection of J evaluated at the volume nodes."""
    if not basis.orthonormal:
        raise ConfigurationError("Jacobian projection needs a rule exact to degree 2p")
    Jp = apply_V(basis, apply_Vt(basis, w[None, :] * geom.J))
    if np.any(Jp <= 0):
        k = int(np.argmin(np.min(Jp, axis=1)))
        raise GeometryError(f"projected Jacobian is non-positive in element {k}")
    return Jp


def weight_adjusted_apply(w_over_jp, basis: ModalBasis, r_modal):
    """V^T [W / J_p] V r for batched modal data (the reference mass is the identity)."""
    return apply_Vt(basis, w_over_jp * apply_V(basis, r_modal))


def weight_adjusted_inverse_dense(w_over_jp, basis: ModalBasis):
    """Dense (K, Np, Np) weight-adjusted inverse mass matrices."""
    V = basis.V
    return np.einsum("qi,kq,qj->kij", V, w_over_jp, V)
