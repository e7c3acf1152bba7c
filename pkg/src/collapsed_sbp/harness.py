"""Experiment configurations, diagnostics and convergence studies."""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field, fields
from functools import lru_cache
from pathlib import Path

import numpy as np
import scipy.linalg

from .errors import ConfigurationError, SizeGuardError
from .mesh import DEFAULT_WARP, generate_mesh
from .physop import Algorithm
from .refelem import ElementShape, as_shape, build_operators, default_config
from .solver import (
    Discretization,
    FluxConfig,
    Formulation,
    SolutionState,
    integrate,
    set_initial_condition,
    sine_product,
    step_times,
)

SIZE_GUARD = 20_000
N_SNAPSHOTS = 101
KINDS = ("residual-trace", "h-sweep", "p-sweep", "spectral-radius", "operator-verify")


@dataclass
class ExperimentConfig:
    kind: str = "residual-trace"
    shape: str = "triangle"
    formulation: str = "modal"
    algorithm: str = "fused"
    p: int = 4
    M: int = 2
    p_g: int | None = None
    eps: float = DEFAULT_WARP
    flux_lambda: float = 1.0
    T: float = 1.0
    courant: float = 1.0
    dt: float | None = None
    dt_halving: bool = True
    halving_tol: float = 1e-3
    max_halvings: int = 6
    velocity: list | None = None
    M_values: list = field(default_factory=list)
    p_values: list = field(default_factory=list)
    out_dir: str | None = None
    seed: int = 0
    initial_condition: str = "sine"

    def __post_init__(self):
        self.validate()

    @property
    def dim(self) -> int:
        return as_shape(self.shape).dim

    @property
    def mapping_degree(self) -> int:
        if self.p_g is not None:
            return int(self.p_g)
        return 3 if as_shape(self.shape) is ElementShape.TRIANGLE else 2

    @property
    def a(self) -> tuple:
        if self.velocity is not None:
            return tuple(float(v) for v in self.velocity)
        return (1.0,) * self.dim

    def validate(self):
        def bad(name, msg):
            raise ConfigurationError(f"config field '{name}': {msg}")

        if self.kind not in KINDS:
            bad("kind", f"must be one of {KINDS}, got {self.kind!r}")
        try:
            as_shape(self.shape)
        except ValueError:
            bad("shape", f"unknown shape {self.shape!r}")
        if self.formulation not in ("nodal", "modal"):
            bad("formulation", "must be 'nodal' or 'modal'")
        if self.algorithm not in ("fused", "precomputed"):
            bad("algorithm", "must be 'fused' or 'precomputed'")
        if not (isinstance(self.p, int) and self.p >= 0):
            bad("p", "must be a non-negative integer")
        if not (isinstance(self.M, int) and self.M >= 1):
            bad("M", "must be a positive integer")
        if self.p_g is not None and not (isinstance(self.p_g, int) and self.p_g >= 1):
            bad("p_g", "must be a positive integer")
        if not 0.0 <= self.flux_lambda <= 1.0:
            bad("flux_lambda", "must lie in [0, 1]")
        if not self.T > 0:
            bad("T", "must be positive")
        if not self.courant > 0:
            bad("courant", "must be positive")
        if self.dt is not None and not self.dt > 0:
            bad("dt", "must be positive")
        if self.velocity is not None and len(self.velocity) != self.dim:
            bad("velocity", f"needs {self.dim} components")
        if self.initial_condition not in ("sine", "constant"):
            bad("initial_condition", "must be 'sine' or 'constant'")
        if self.kind == "h-sweep" and len(self.M_values) < 2:
            bad("M_values", "an h-sweep needs at least two mesh sizes")
        if self.kind == "p-sweep" and len(self.p_values) < 2:
            bad("p_values", "a p-sweep needs at least two degrees")

    def replace(self, **kw) -> "ExperimentConfig":
        data = asdict(self)
        data.update(kw)
        return ExperimentConfig(**data)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data, source="<dict>"):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(f"{source}: unknown config field(s) {unknown}")
        try:
            return cls(**data)
        except ConfigurationError as exc:
            raise ConfigurationError(f"{source}: {exc}") from None
        except TypeError as exc:
            raise ConfigurationError(f"{source}: {exc}") from None

    @classmethod
    def from_json(cls, path):
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(data, source=str(path))


@dataclass
class RunRecord:
    config: dict
    t: list = field(default_factory=list)
    conservation: list = field(default_factory=list)
    energy: list = field(default_factory=list)
    l2_error: float | None = None
    spectral_radius: float | None = None
    dt: float | None = None
    n_steps: int = 0
    n_dofs: int = 0
    wall_time: float = 0.0
    notes: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)

    def write(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "record.json").write_text(json.dumps(self.to_dict(), indent=2))
        if self.t:
            write_csv(out / "trace.csv", ["t", "conservation", "energy"],
                      zip(self.t, self.conservation, self.energy))


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]

    def conv(v):
        for t in (int, float):
            try:
                return t(v)
            except ValueError:
                pass
        return v

    return [dict(zip(header, map(conv, r))) for r in body]


# --------------------------------------------------------------------------
# building blocks


@lru_cache(maxsize=None)
def _operators(shape, p):
    return build_operators(default_config(shape, p))


def build_discretization(cfg: ExperimentConfig, allow_metric_violation=False) -> Discretization:
    shape = as_shape(cfg.shape)
    ops = _operators(shape, cfg.p)
    mesh = generate_mesh(shape, cfg.M, cfg.mapping_degree, cfg.eps)
    return Discretization(mesh, ops, FluxConfig(cfg.a, cfg.flux_lambda),
                          Formulation(cfg.formulation), Algorithm(cfg.algorithm),
                          allow_metric_violation=allow_metric_violation)


def initial_function(cfg: ExperimentConfig):
    if cfg.initial_condition == "constant":
        return lambda x: np.ones(x.shape[:-1])
    return sine_product


def l2_error(disc: Discretization, state: SolutionState, u0=sine_product) -> float:
    """Discrete L2 error against the translated initial condition, W J weighted."""
    u = disc.nodal_values(state.coeffs)
    e = u - disc.exact_solution(state.t, u0)
    return float(np.sqrt(np.sum(disc.global_mass() * e * e)))


def conservation_residual(disc: Discretization, dudt) -> float:
    return float(np.sum(disc.global_mass() * disc.nodal_values(dudt)))


def energy_residual(disc: Discretization, coeffs, dudt, modal_mass=None) -> float:
    if disc.formulation is Formulation.NODAL:
        return float(np.sum(disc.global_mass() * coeffs * dudt))
    if modal_mass is None:
        modal_mass = disc.modal_mass_dense()
    return float(np.einsum("ki,kij,kj->", coeffs, modal_mass, dudt))


def assemble_operator(disc: Discretization) -> np.ndarray:
    """Global semi-discrete matrix, one column per unit state through ``time_derivative``."""
    N = disc.n_dofs
    if N > SIZE_GUARD:
        raise SizeGuardError(f"{N} degrees of freedom exceed the size guard {SIZE_GUARD}")
    shape = (disc.n_elements, N // disc.n_elements)
    A = np.empty((N, N))
    e = np.zeros(N)
    for j in range(N):
        e[j] = 1.0
        A[:, j] = disc.time_derivative(e.reshape(shape)).ravel()
        e[j] = 0.0
    return A


def power_iteration_radius(disc: Discretization, tol=1e-8, maxiter=20000, seed=0) -> float:
    """sqrt of the largest eigenvalue of A^T A (an upper bound on the spectral radius)."""
    N = disc.n_dofs
    A = assemble_operator(disc)
    v = np.random.default_rng(seed).standard_normal(N)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(maxiter):
        w = A.T @ (A @ v)
        new = float(np.linalg.norm(w))
        v = w / new
        if abs(new - lam) <= tol * new:
            break
        lam = new
    return float(np.sqrt(new))


def spectral_radius_of(disc: Discretization) -> float:
    """max |eigenvalue| of the assembled operator; power iteration if the eigensolve fails."""
    if not np.any(disc.flux.a):
        return 0.0
    A = assemble_operator(disc)
    try:
        return float(np.max(np.abs(scipy.linalg.eigvals(A))))
    except (np.linalg.LinAlgError, ValueError):
        return power_iteration_radius(disc)


def spectral_radius(cfg: ExperimentConfig) -> float:
    """Spectral radius of the global semi-discrete operator for a configuration."""
    return spectral_radius_of(build_discretization(cfg))


def reference_radius(cfg: ExperimentConfig) -> float:
    """Mesh-independent rho_hat = rho h / |a| measured on a small reference mesh."""
    M_ref = 2 if cfg.dim == 2 else 1
    key = (cfg.shape, cfg.formulation, cfg.p, cfg.mapping_degree, cfg.eps, cfg.flux_lambda,
           cfg.a)
    if key not in _RHO_CACHE:
        ref = cfg.replace(M=M_ref, algorithm="fused", initial_condition="sine")
        speed = float(np.linalg.norm(cfg.a))
        rho = spectral_radius(ref)
        _RHO_CACHE[key] = rho / (M_ref * speed) if speed > 0 else 0.0
    return _RHO_CACHE[key]


_RHO_CACHE: dict = {}


def choose_dt(cfg: ExperimentConfig, dt_factor=1.0) -> float:
    """dt = C h / (|a| rho_hat); an explicit ``cfg.dt`` wins."""
    if cfg.dt is not None:
        return float(cfg.dt) * dt_factor
    speed = float(np.linalg.norm(cfg.a))
    rho_hat = reference_radius(cfg)
    if speed == 0.0 or rho_hat == 0.0:
        return cfg.T
    return min(cfg.T, dt_factor * cfg.courant / (cfg.M * speed * rho_hat))


# --------------------------------------------------------------------------
# experiments


def run_simulation(cfg: ExperimentConfig, dt=None, disc=None, trace=False,
                   dt_factor=1.0) -> RunRecord:
    """Integrate to cfg.T and record the L2 error (and optionally 101 diagnostic snapshots)."""
    t0 = time.perf_counter()
    disc = disc or build_discretization(cfg)
    u0 = initial_function(cfg)
    state = set_initial_condition(disc, u0)
    rec = RunRecord(config=cfg.to_dict(), n_dofs=disc.n_dofs)
    if dt is None:
        dt = choose_dt(cfg, dt_factor)
    rec.dt = float(dt)
    times = step_times(0.0, cfg.T, dt)
    rec.n_steps = len(times) - 1
    callback = None
    if trace:
        targets = np.linspace(0.0, cfg.T, N_SNAPSHOTS)
        nearest = np.abs(times[None, :] - targets[:, None]).argmin(axis=1)
        wanted = {}
        for j, n in enumerate(nearest):
            wanted.setdefault(int(n), []).append(j)
        mm = disc.modal_mass_dense() if disc.formulation is Formulation.MODAL else None
        snaps = [None] * N_SNAPSHOTS

        def callback(n, t, st):
            if n not in wanted:
                return
            dudt = disc.time_derivative(st.coeffs)
            c = conservation_residual(disc, dudt)
            e = energy_residual(disc, st.coeffs, dudt, mm)
            for j in wanted[n]:
                snaps[j] = (float(t), c, e)

    final = integrate(disc, state, cfg.T, dt, callback=callback)
    if trace:
        rec.t = [s[0] for s in snaps]
        rec.conservation = [s[1] for s in snaps]
        rec.energy = [s[2] for s in snaps]
    rec.l2_error = l2_error(disc, final, u0)
    rec.wall_time = time.perf_counter() - t0
    return rec


def residual_trace(cfg: ExperimentConfig, dt_factor=1.0) -> RunRecord:
    """Conservation and energy residuals at 101 snapshots over [0, T].

    dt is capped at T/100 so every snapshot falls on its own completed step.
    """
    dt = min(choose_dt(cfg, dt_factor), cfg.T / (N_SNAPSHOTS - 1))
    return run_simulation(cfg, dt=dt, trace=True)


def run_with_halving(cfg: ExperimentConfig, disc=None, dt_factor=1.0) -> RunRecord:
    """Halve dt until the L2 error changes by less than ``halving_tol`` (relative)."""
    disc = disc or build_discretization(cfg)
    dt = choose_dt(cfg, dt_factor)
    rec = run_simulation(cfg, dt=dt, disc=disc)
    for _ in range(cfg.max_halvings):
        dt /= 2
        new = run_simulation(cfg, dt=dt, disc=disc)
        change = abs(new.l2_error - rec.l2_error) / max(new.l2_error, 1e-300)
        new.notes = rec.notes + [f"dt={rec.dt:.6g} -> {dt:.6g}: relative change {change:.3e}"]
        rec = new
        if change < cfg.halving_tol:
            break
    return rec


def observed_orders(hs, errors):
    out = [None]
    for i in range(1, len(errors)):
        out.append(math.log(errors[i - 1] / errors[i]) / math.log(hs[i - 1] / hs[i]))
    return out


def run_convergence(cfg: ExperimentConfig, out_csv=None, dt_factor=1.0):
    """h- or p-sweep; returns rows (scheme, p, M, dofs, l2_error, order) and writes CSV."""
    base = run_with_halving if cfg.dt_halving else run_simulation

    def runner(c):
        return base(c, dt_factor=dt_factor)
    scheme = f"{cfg.shape}-{cfg.formulation}-lambda{cfg.flux_lambda:g}"
    rows = []
    if cfg.kind == "h-sweep":
        for M in cfg.M_values:
            rec = runner(cfg.replace(M=int(M), kind="residual-trace"))
            rows.append({"scheme": scheme, "p": cfg.p, "M": int(M), "dofs": rec.n_dofs,
                         "l2_error": rec.l2_error, "dt": rec.dt})
        orders = observed_orders([1.0 / r["M"] for r in rows], [r["l2_error"] for r in rows])
    elif cfg.kind == "p-sweep":
        for p in cfg.p_values:
            rec = runner(cfg.replace(p=int(p), kind="residual-trace"))
            rows.append({"scheme": scheme, "p": int(p), "M": cfg.M, "dofs": rec.n_dofs,
                         "l2_error": rec.l2_error, "dt": rec.dt})
        orders = [None] * len(rows)
    else:
        raise ConfigurationError(f"run_convergence needs an h-sweep or p-sweep, got {cfg.kind}")
    for r, o in zip(rows, orders):
        r["order"] = "" if o is None else o
    if out_csv is not None:
        header = ["scheme", "p", "M", "dofs", "l2_error", "order", "dt"]
        write_csv(out_csv, header, ([r[h] for h in header] for r in rows))
    return rows
