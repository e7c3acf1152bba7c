"""End-to-end acceptance checks; each test prints one PASS/FAIL line."""
import time

import numpy as np

from collapsed_sbp.exact import multi_indices
from collapsed_sbp.harness import (
    ExperimentConfig,
    choose_dt,
    residual_trace,
    run_convergence,
    spectral_radius,
)
from collapsed_sbp.mesh import DEFAULT_WARP, generate_mesh
from collapsed_sbp.pkd import build_modal_basis, num_modes
from collapsed_sbp.refelem import (
    ElementShape,
    build_operators,
    default_config,
    facet_quadrature,
    triangle_jacobi_config,
    verify_sbp,
)
from collapsed_sbp.solver import Discretization, FluxConfig, integrate, set_initial_condition

from conftest import ACCEPTANCE_LINES

TRI, TET = ElementShape.TRIANGLE, ElementShape.TETRAHEDRON
SUPPORTED = [(TRI, q) for q in range(1, 9)] + [(TET, q) for q in range(1, 7)]


def report(n, title, ok, detail):
    line = f"criterion {n:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def monomials(x, alphas):
    return np.stack([np.prod(x ** np.array(a), axis=-1) for a in alphas], axis=-1)


def monomial_derivatives(x, alphas, m):
    out = []
    for a in alphas:
        b = np.array(a)
        if b[m] == 0:
            out.append(np.zeros(len(x)))
            continue
        c = b.copy()
        c[m] -= 1
        out.append(b[m] * np.prod(x ** c, axis=-1))
    return np.stack(out, axis=-1)


def make_disc(shape, p, formulation="nodal", algorithm="fused", eps=DEFAULT_WARP, M=2, p_g=None):
    p_g = p_g or (3 if shape is TRI else 2)
    mesh = generate_mesh(shape, M, p_g, eps)
    ops = build_operators(default_config(shape, p))
    return Discretization(mesh, ops, FluxConfig((1.0,) * shape.dim, 1.0), formulation, algorithm)


def test_operator_correctness():
    t0 = time.perf_counter()
    sbp = diff = ext = 0.0
    for shape, q in SUPPORTED:
        cfg = default_config(shape, q)
        ops = build_operators(cfg)
        alphas = multi_indices(shape.dim, q)
        P = monomials(ops.xi, alphas)
        for m in range(shape.dim):
            sbp = max(sbp, np.abs(ops.Q[m] + ops.Q[m].T - ops.E[m]).max())
            diff = max(diff, np.abs(ops.D[m] @ P - monomial_derivatives(ops.xi, alphas, m)).max())
        for z in range(shape.num_facets):
            xf, _ = facet_quadrature(shape, z + 1, cfg)
            ext = max(ext, np.abs(ops.R[z] @ P - monomials(xf, alphas)).max())
    elapsed = time.perf_counter() - t0
    ok = sbp <= 1e-12 and diff <= 1e-9 and ext <= 1e-9 and elapsed < 10
    report(1, "operator correctness", ok,
           f"sbp {sbp:.1e}, differentiation {diff:.1e}, extrapolation {ext:.1e}, {elapsed:.1f} s")


def test_negative_control():
    worst, flagged = np.inf, True
    for q in range(2, 9):
        rep = verify_sbp(build_operators(triangle_jacobi_config(q)))
        worst = min(worst, rep.sbp_residual)
        flagged &= not rep.passed()
    report(2, "negative control", worst > 1e-6 and flagged,
           f"smallest sbp residual {worst:.2e} over q=2..8, verifier flags all: {flagged}")


def test_orthonormality():
    worst = 0.0
    for shape, p in [(TRI, p) for p in range(0, 9)] + [(TET, p) for p in range(0, 7)]:
        ops = build_operators(default_config(shape, p))
        V = build_modal_basis(ops, p).V
        worst = max(worst, np.abs(V.T @ (ops.w[:, None] * V) - np.eye(num_modes(shape.dim, p))).max())
    report(3, "orthonormality", worst <= 1e-12, f"max |V^T W V - I| {worst:.1e}")


def test_sum_factorization_equivalence():
    t0 = time.perf_counter()
    res = td = 0.0
    for shape in (TRI, TET):
        for p in (2, 3, 4):
            for form in ("nodal", "modal"):
                fused = make_disc(shape, p, form)
                dense = make_disc(shape, p, form, "precomputed")
                rng = np.random.default_rng(p)
                for _ in range(50):
                    c = rng.standard_normal((fused.n_elements, fused.n_dofs // fused.n_elements))
                    res = max(res, np.abs(fused.residual(c) - dense.residual(c)).max())
                    ref = dense.time_derivative(c)
                    td = max(td, np.abs(fused.time_derivative(c) - ref).max() / np.abs(ref).max())
    elapsed = time.perf_counter() - t0
    ok = res <= 1e-12 and td <= 1e-12 and elapsed < 60
    report(4, "sum-factorization equivalence", ok,
           f"residual {res:.1e}, time derivative (relative) {td:.1e}, {elapsed:.1f} s")


def test_free_stream():
    rate = drift = 0.0
    cases = [(TRI, 4)] + [(TET, p) for p in (2, 3, 4)]
    for shape, p in cases:
        for form in ("nodal", "modal"):
            disc = make_disc(shape, p, form)
            st = set_initial_condition(disc, lambda x: np.ones(x.shape[:-1]))
            rate = max(rate, np.abs(disc.time_derivative(st.coeffs)).max())
            cfg = ExperimentConfig(shape=shape.value, formulation=form, p=p)
            final = integrate(disc, st, 1.0, choose_dt(cfg))
            drift = max(drift, np.abs(disc.nodal_values(final.coeffs) - 1.0).max())
    report(5, "free-stream preservation", rate <= 1e-11 and drift <= 1e-10,
           f"max |du/dt| {rate:.1e}, drift over T=1 {drift:.1e}")


def test_conservation_and_energy():
    t0 = time.perf_counter()
    cons = central = 0.0
    upwind_max = weakest = -np.inf
    for shape in ("triangle", "tetrahedron"):
        for form in ("nodal", "modal"):
            for lam in (0.0, 1.0):
                rec = residual_trace(ExperimentConfig(shape=shape, formulation=form, p=4, M=2,
                                                      flux_lambda=lam))
                assert len(rec.t) == 101
                cons = max(cons, max(map(abs, rec.conservation)))
                if lam == 0.0:
                    central = max(central, max(map(abs, rec.energy)))
                else:
                    upwind_max = max(upwind_max, max(rec.energy))
                    # every upwind run must dissipate strictly at some snapshot
                    weakest = max(weakest, min(rec.energy))
    elapsed = time.perf_counter() - t0
    ok = (cons <= 1e-11 and central <= 1e-11 and upwind_max <= 1e-12
          and weakest < -1e-10 and elapsed < 300)
    report(6, "conservation and energy", ok,
           f"conservation {cons:.1e}, central |energy| {central:.1e}, upwind max {upwind_max:.1e}, "
           f"weakest upwind minimum {weakest:.1e}, {elapsed:.0f} s")


def test_h_convergence():
    t0 = time.perf_counter()
    lines, ok = [], True
    cases = [("triangle", p, [2, 4, 8, 16]) for p in (2, 3, 4)]
    cases += [("tetrahedron", p, [2, 4, 8]) for p in (2, 3)]
    for shape, p, Ms in cases:
        for form in ("modal", "nodal"):
            rows = run_convergence(ExperimentConfig(kind="h-sweep", shape=shape, formulation=form,
                                                    p=p, M_values=Ms))
            order = rows[-1]["order"]
            ok &= order >= p + 0.7
            lines.append(f"{shape[:3]}-{form}-p{p} {order:.2f}")
    elapsed = time.perf_counter() - t0
    report(7, "h-convergence", ok, ", ".join(lines) + f" ({elapsed:.0f} s)")


def test_p_refinement():
    details, ok = [], True
    for lam, name in ((1.0, "upwind"), (0.0, "central")):
        rows = run_convergence(ExperimentConfig(kind="p-sweep", M=2, p_values=list(range(2, 9)),
                                                flux_lambda=lam))
        e = [r["l2_error"] for r in rows]
        mono = all(b < a for a, b in zip(e, e[1:]))
        ok &= mono and e[0] / e[-1] >= 1e3
        details.append(f"{name} reduction {e[0] / e[-1]:.0f}x monotone {mono}")
    report(8, "p-refinement", ok, ", ".join(details))


def test_spectral_radius_trend():
    ps = np.arange(2, 9)
    modal = [spectral_radius(ExperimentConfig(formulation="modal", p=int(p))) for p in ps]
    nodal8 = spectral_radius(ExperimentConfig(formulation="nodal", p=8))
    ratio = nodal8 / modal[-1]
    exponent = np.polyfit(np.log(ps), np.log(modal), 1)[0]
    report(9, "spectral-radius trend", ratio >= 2 and exponent <= 2.5,
           f"nodal/modal at p=8 {ratio:.1f}, modal growth exponent {exponent:.2f}")


def test_weight_adjusted_affine_exactness():
    worst = 0.0
    for shape, p in [(TRI, 2), (TRI, 4), (TET, 2), (TET, 3)]:
        disc = make_disc(shape, p, "modal", eps=0.0)
        V, w = disc.basis.V, disc.ops.w
        c = np.random.default_rng(p).standard_normal((disc.n_elements, disc.basis.n_modes))
        r = disc.residual(c)
        dudt = disc.time_derivative(c)
        for k in range(disc.n_elements):
            Mk = V.T @ ((w * disc.geom.J[k])[:, None] * V)
            exact = np.linalg.solve(Mk, V.T @ r[k])
            worst = max(worst, np.abs(dudt[k] - exact).max() / np.abs(dudt).max())
    report(10, "weight-adjusted exactness on affine elements", worst <= 1e-12,
           f"max relative deviation {worst:.1e}")


def best_time(fn, repeat=5):
    fn()
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def test_fused_cost_scaling():
    ps = np.arange(4, 13)
    times = []
    for p in ps:
        disc = make_disc(TRI, int(p), M=16)
        u = np.random.default_rng(0).standard_normal((disc.n_elements, disc.ops.n_nodes))
        times.append(best_time(lambda: disc.residual_nodal(u)))
    exponent = np.polyfit(np.log(ps), np.log(times), 1)[0]
    report(11, "fused residual cost scaling", exponent <= 3.5,
           f"fitted exponent {exponent:.2f} over p=4..12 at M=16")
