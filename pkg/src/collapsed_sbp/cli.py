"""Command-line driver: ``collapsed-sbp <subcommand> [options]``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import harness
from .errors import CollapsedSBPError, ConfigurationError
from .refelem import build_operators, default_config, triangle_jacobi_config, verify_sbp


def _add_common(p):
    p.add_argument("--config", type=Path, help="JSON experiment configuration")
    p.add_argument("--out-dir", type=Path, help="directory for CSV/JSON outputs")
    p.add_argument("--seed", type=int, default=None, help="seed for randomized test vectors")
    p.add_argument("--threads", type=int, default=1, help="BLAS threads (default 1)")
    p.add_argument("--dt-factor", type=float, default=1.0,
                   help="multiplier applied to the selected time step")


def build_parser():
    parser = argparse.ArgumentParser(prog="collapsed-sbp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify-operators", help="check SBP identities and accuracy")
    _add_common(p)
    p.add_argument("--shape", default="triangle", choices=["triangle", "tetrahedron"])
    p.add_argument("--p", type=int, default=4, help="operator degree q")
    p.add_argument("--jacobi-eta2", action="store_true",
                   help="use the (1,0) Jacobi rule in eta2 on triangles (negative control)")

    p = sub.add_parser("run", help="run the experiment described by --config")
    _add_common(p)

    p = sub.add_parser("sweep", help="h- or p-convergence sweep from --config")
    _add_common(p)

    p = sub.add_parser("spectral-radius", help="spectral radius of the global operator")
    _add_common(p)

    p = sub.add_parser("export-operators", help="write operators.json for a shape and degree")
    _add_common(p)
    p.add_argument("--shape", default="triangle", choices=["triangle", "tetrahedron"])
    p.add_argument("--p", type=int, default=4, help="operator degree q")
    return parser


def _load(args):
    if args.config is None:
        raise ConfigurationError("--config is required for this subcommand")
    cfg = harness.ExperimentConfig.from_json(args.config)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def _out_dir(args, cfg=None):
    out = args.out_dir or (Path(cfg.out_dir) if cfg and cfg.out_dir else Path("."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_verify(args):
    cfg = triangle_jacobi_config(args.p) if args.jacobi_eta2 else default_config(args.shape, args.p)
    if args.jacobi_eta2 and args.shape != "triangle":
        raise ConfigurationError("--jacobi-eta2 applies to triangles only")
    rep = verify_sbp(build_operators(cfg))
    print(f"{args.shape} q={args.p}  sbp guaranteed: {rep.sbp_guaranteed}")
    for name, val in rep.rows():
        print(f"  {name:<24s} {val:.3e}")
    for v in rep.violations:
        print(f"  violation: {v}")
    ok = rep.passed()
    print("PASS" if ok else "FAIL")
    if args.out_dir:
        out = _out_dir(args)
        (out / "verify.json").write_text(json.dumps(
            {"shape": args.shape, "q": args.p, "passed": ok, "violations": list(rep.violations),
             **{k: v for k, v in rep.rows()}}, indent=2))
    return 0 if ok else 1


def _spectral(cfg, args):
    disc = harness.build_discretization(cfg)
    A = harness.assemble_operator(disc)
    rng = np.random.default_rng(cfg.seed)
    v = rng.standard_normal(disc.n_dofs)
    direct = disc.time_derivative(v.reshape(disc.n_elements, -1)).ravel()
    check = float(np.max(np.abs(A @ v - direct)) / max(1.0, np.max(np.abs(direct))))
    rho = harness.spectral_radius_of(disc)
    rec = harness.RunRecord(config=cfg.to_dict(), spectral_radius=rho, n_dofs=disc.n_dofs,
                            notes=[f"assembly check (relative): {check:.3e}"])
    print(f"spectral radius {rho:.10g} ({disc.n_dofs} dofs, assembly check {check:.1e})")
    rec.write(_out_dir(args, cfg))
    return 0


def cmd_run(args):
    cfg = _load(args)
    if cfg.kind in ("h-sweep", "p-sweep"):
        return cmd_sweep(args, cfg)
    if cfg.kind == "spectral-radius":
        return _spectral(cfg, args)
    if cfg.kind == "operator-verify":
        args.shape, args.p, args.jacobi_eta2 = cfg.shape, cfg.p, False
        return cmd_verify(args)
    rec = harness.residual_trace(cfg, dt_factor=args.dt_factor)
    out = _out_dir(args, cfg)
    rec.write(out)
    print(f"L2 error {rec.l2_error:.6e}  dt {rec.dt:.4e}  steps {rec.n_steps}  "
          f"max|conservation| {max(map(abs, rec.conservation)):.2e}  "
          f"max energy {max(rec.energy):.2e}  -> {out}")
    return 0


def cmd_sweep(args, cfg=None):
    cfg = cfg or _load(args)
    out = _out_dir(args, cfg)
    rows = harness.run_convergence(cfg, out / "convergence.csv", dt_factor=args.dt_factor)
    for r in rows:
        order = "" if r["order"] == "" else f"{r['order']:.3f}"
        print(f"{r['scheme']}  p={r['p']}  M={r['M']}  dofs={r['dofs']}  "
              f"error={r['l2_error']:.6e}  order={order}")
    return 0


def cmd_spectral(args):
    return _spectral(_load(args), args)


def cmd_export(args):
    ops = build_operators(default_config(args.shape, args.p))
    out = _out_dir(args)
    ops.to_json(out / "operators.json")
    print(f"wrote {out / 'operators.json'}")
    return 0


COMMANDS = {"verify-operators": cmd_verify, "run": cmd_run, "sweep": cmd_sweep,
            "spectral-radius": cmd_spectral, "export-operators": cmd_export}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        with threadpool_limits(limits=args.threads):
            return COMMANDS[args.command](args)
    except CollapsedSBPError as exc:
        print(f"error [{exc.category}]: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error [io]: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
