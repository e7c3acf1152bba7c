"""Split-form DSEM for periodic linear advection and low-storage Runge-Kutta stepping."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DivergenceError
from .mesh import Mesh, build_connectivity
from .physop import (
    Algorithm,
    PhysicalOperatorSet,
    apply_R,
    apply_Rt,
    apply_dhat,
    build_physical_operators,
    check_metric_degree,
    compute_geometry,
    project_jacobian,
)
from .pkd import ModalBasis, apply_V, apply_Vt, build_modal_basis, modal_projection
from .refelem import SBPOperatorSet


class Formulation(str, enum.Enum):
    NODAL = "nodal"
    MODAL = "modal"


@dataclass(frozen=True)
class FluxConfig:
    a: tuple
    lam: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigurationError(f"upwinding parameter must lie in [0, 1], got {self.lam}")


def numerical_flux(u_minus, u_plus, n, cfg: FluxConfig):
    """Lax-Friedrichs-type flux; lam = 1 is upwind, lam = 0 is central."""
    an = np.tensordot(np.asarray(n, dtype=float), np.asarray(cfg.a, dtype=float), axes=([-1], [0]))
    return 0.5 * an * (u_minus + u_plus) - 0.5 * cfg.lam * np.abs(an) * (u_plus - u_minus)


@dataclass
class SolutionState:
    formulation: Formulation
    coeffs: np.ndarray      # (K, Nq) nodal or (K, Np) modal
    t: float = 0.0

    def copy(self):
        return SolutionState(self.formulation, self.coeffs.copy(), self.t)


def sine_product(x):
    """Default initial condition prod_m sin(2 pi x_m)."""
    return np.prod(np.sin(2 * np.pi * x), axis=-1)


@dataclass
class Discretization:
    """All per-run data: mesh, reference and physical operators, exchange maps."""

    mesh: Mesh
    ops: SBPOperatorSet
    flux: FluxConfig
    formulation: Formulation = Formulation.NODAL
    algorithm: Algorithm = Algorithm.REFERENCE_FUSED
    allow_metric_violation: bool = False
    basis: ModalBasis | None = None
    pos: PhysicalOperatorSet = field(init=False, repr=False)

    def __post_init__(self):
        self.formulation = Formulation(self.formulation)
        self.algorithm = Algorithm(self.algorithm)
        ops, mesh = self.ops, self.mesh
        if ops.violations:
            raise ConfigurationError(
                "operator set is not a guaranteed SBP operator: " + "; ".join(ops.violations))
        if len(self.flux.a) != ops.dim:
            raise ConfigurationError("advection velocity dimension does not match the mesh")
        check_metric_degree(ops.dim, ops.q, mesh.p_g, self.allow_metric_violation)
        if mesh.connectivity is None or mesh.connectivity.perm.shape[-1] != ops.n_facet_nodes:
            build_connectivity(mesh, ops)
        self.geom = compute_geometry(mesh, ops)
        self._setup_exchange()
        self.pos = build_physical_operators(self.geom, ops, self.algorithm)
        a = np.asarray(self.flux.a, dtype=float)
        self._a = a
        self._Fa = np.einsum("klmi,m->kli", self.pos.F, a)
        # scaled normal velocity B J_f (a . N), each side from its own Nanson factors
        self._s = np.einsum("kzim,m->kzi", self.pos.BJN, a)
        self._abs_s = np.abs(self._s)
        if self.formulation is Formulation.MODAL:
            if self.basis is None:
                self.basis = build_modal_basis(ops)
            self.Jp = project_jacobian(self.geom, self.basis, ops.w)
            self.w_over_jp = ops.w[None, :] / self.Jp
        if self.algorithm is Algorithm.PHYSICAL_PRECOMPUTED:
            self._setup_dense()

    # ---------------------------------------------------------------- setup

    @property
    def n_elements(self) -> int:
        return self.mesh.n_elements

    @property
    def n_dofs(self) -> int:
        n = self.basis.n_modes if self.formulation is Formulation.MODAL else self.ops.n_nodes
        return n * self.n_elements

    def _setup_exchange(self):
        """Flat gather index giving the exterior trace at every facet node."""
        conn = self.mesh.connectivity
        K, Nf, Nqf = conn.perm.shape
        own = np.arange(K * Nf * Nqf).reshape(K, Nf, Nqf)
        plus = np.take_along_axis(own[conn.partner, conn.partner_facet], conn.perm, axis=-1)
        plus = plus.ravel()
        if np.any(plus[plus] != own.ravel()):
            raise ConfigurationError("facet node exchange is not an involution")
        self._plus = plus

    def _setup_dense(self):
        ops, pos = self.ops, self.pos
        QtA = np.einsum("m,kmji->kij", self._a, pos.Q)   # sum_m a_m Q_m^T
        R = np.concatenate(ops.R, axis=0)                 # (Nf*Nqf, Nq)
        if self.formulation is Formulation.NODAL:
            self._A = pos.inv_wj[:, :, None] * QtA
            self._L = pos.inv_wj[:, :, None] * R.T[None]
            self._Rv = R
        else:
            V = self.basis.V
            Minv = np.einsum("qi,kq,qj->kij", V, self.w_over_jp, V)
            self._A = Minv @ (V.T[None] @ QtA @ V[None])
            self._L = Minv @ (V.T @ R.T)[None]
            self._Rv = R @ V

    # ---------------------------------------------------------------- kernels

    def nodal_values(self, coeffs):
        if self.formulation is Formulation.MODAL:
            return apply_V(self.basis, coeffs)
        return coeffs

    def exterior(self, uf):
        """Exterior traces u+ at every facet node, shape of ``uf``."""
        return uf.reshape(-1)[self._plus].reshape(uf.shape)

    def facet_flux(self, uf):
        """B J_f f* at every facet node (K, Nf, Nqf)."""
        up = self.exterior(uf)
        return 0.5 * self._s * (uf + up) - 0.5 * self.flux.lam * self._abs_s * (up - uf)

    def residual_nodal(self, u):
        """Nodal residual r (before the mass inverse) via sum-factorized kernels."""
        ops = self.ops
        r = np.zeros_like(u)
        for l in range(ops.dim):
            f = self._Fa[:, l]
            r += apply_dhat(ops, f * u, l, transpose=True) - f * apply_dhat(ops, u, l)
        uf = apply_R(ops, u)
        up = self.exterior(uf)
        # B J_f (f* - (a.N) u / 2) with the interior half cancelled analytically
        g = 0.5 * self._s * up - 0.5 * self.flux.lam * self._abs_s * (up - uf)
        r -= apply_Rt(ops, g)
        return r

    def residual(self, state_coeffs):
        """Per-element residual; modal states are mapped to nodes first."""
        u = self.nodal_values(state_coeffs)
        if self.algorithm is Algorithm.PHYSICAL_PRECOMPUTED:
            R = np.concatenate(self.ops.R, axis=0)
            h = self.facet_flux((u @ R.T).reshape(self._s.shape))
            return np.einsum("kmji,m,kj->ki", self.pos.Q, self._a, u) - h.reshape(len(u), -1) @ R
        return self.residual_nodal(u)

    def time_derivative(self, coeffs, t=0.0):
        if self.algorithm is Algorithm.PHYSICAL_PRECOMPUTED:
            h = self.facet_flux((coeffs @ self._Rv.T).reshape(self._s.shape))
            return (np.einsum("kij,kj->ki", self._A, coeffs)
                    - np.einsum("kif,kf->ki", self._L, h.reshape(len(coeffs), -1)))
        r = self.residual_nodal(self.nodal_values(coeffs))
        return self.mass_solve(r)

    def mass_solve(self, r):
        """Apply the (weight-adjusted) inverse mass matrix to a nodal residual."""
        if self.formulation is Formulation.NODAL:
            return self.pos.inv_wj * r
        b = self.basis
        return apply_Vt(b, self.w_over_jp * apply_V(b, apply_Vt(b, r)))

    # ---------------------------------------------------------------- state

    def initial_state(self, u0=sine_product) -> SolutionState:
        return set_initial_condition(self, u0)

    def exact_solution(self, t, u0=sine_product):
        x = self.geom.x - self._a * t
        return u0(np.mod(x, 1.0))

    def global_mass(self):
        """Per-element weights for global inner products: (K, Nq) nodal W J."""
        return self.ops.w[None, :] * self.geom.J

    def modal_mass_dense(self):
        """Dense weight-adjusted mass matrices, inverses of V^T [W/J_p] V."""
        V = self.basis.V
        Minv = np.einsum("qi,kq,qj->kij", V, self.w_over_jp, V)
        return np.linalg.inv(Minv)


def set_initial_condition(disc: Discretization, u0=sine_product) -> SolutionState:
    """Nodal samples, or the projection with the curved mass matrix for modal states."""
    vals = u0(disc.geom.x)
    if disc.formulation is Formulation.NODAL:
        return SolutionState(Formulation.NODAL, vals, 0.0)
    c = modal_projection(disc.basis, disc.ops.w, vals, jac=disc.geom.J)
    return SolutionState(Formulation.MODAL, c, 0.0)


# --------------------------------------------------------------------------
# time integration

# Carpenter-Kennedy five-stage fourth-order 2N-storage coefficients
RK4A = np.array([0.0,
                 -567301805773.0 / 1357537059087.0,
                 -2404267990393.0 / 2016746695238.0,
                 -3550918686646.0 / 2091501179385.0,
                 -1275806237668.0 / 842570457699.0])
RK4B = np.array([1432997174477.0 / 9575080441755.0,
                 5161836677717.0 / 13612068292357.0,
                 1720146321549.0 / 2090206949498.0,
                 3134564353537.0 / 4481467310338.0,
                 2277821191437.0 / 14882151754819.0])
RK4C = np.array([0.0,
                 1432997174477.0 / 9575080441755.0,
                 2526269341429.0 / 6820363962896.0,
                 2006345519317.0 / 3224310063776.0,
                 2802321613138.0 / 2924317926251.0])


def step_times(t0, T, dt):
    """Completed-step times; the last step is shortened to land on T."""
    if dt <= 0:
        raise ConfigurationError("time step must be positive")
    n = int(np.ceil((T - t0) / dt * (1 - 1e-12)))
    n = max(n, 0)
    times = t0 + dt * np.arange(n + 1)
    if n:
        times[-1] = T
    return times


def lsrk54(rhs, u0, T, dt, t0=0.0, callback=None):
    """Integrate du/dt = rhs(u, t) from t0 to T; ``callback(step, t, u)`` after each step."""
    u = np.array(u0, dtype=float, copy=True)
    du = np.zeros_like(u)
    times = step_times(t0, T, dt)
    if callback is not None:
        callback(0, times[0], u)
    for n in range(1, len(times)):
        t, h = times[n - 1], times[n] - times[n - 1]
        for s in range(5):
            du = RK4A[s] * du + h * rhs(u, t + RK4C[s] * h)
            u = u + RK4B[s] * du
        if not np.all(np.isfinite(u)):
            raise DivergenceError(f"non-finite solution at step {n} (t={times[n]:.6g})", step=n)
        if callback is not None:
            callback(n, times[n], u)
    return u


def integrate(disc: Discretization, state: SolutionState, T, dt, callback=None) -> SolutionState:
    """Advance a solution state to time T with the low-storage RK scheme."""
    cb = None
    if callback is not None:
        def cb(n, t, u):
            callback(n, t, SolutionState(state.formulation, u, t))
    u = lsrk54(disc.time_derivative, state.coeffs, T, dt, t0=state.t, callback=cb)
    return SolutionState(state.formulation, u, float(T))
