"""Command-line front end.

Subcommands: solve, verify, correct-volume, experiment-collar, oracle-1d.
Every error class maps to a distinct documented exit code (see README);
exit 0 from `solve` means all residuals passed the configured tolerances.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import fixtures, io
from .domains import build_domain, collar as make_collar, inradius
from .errors import (
    InputIOError,
    JacshapeError,
    ResidualToleranceError,
    UsageError,
)
from .fields import ScalarField, integrate, jacobian_det, scalar_field
from .report import SolveReport
from .solvers import (
    FixedPointConfig,
    fixedpoint_solve,
    identity_region,
    solve,
    solve_1d,
    volume_correct,
)
from .transport import FlowConfig, GridMap, map_report, moser_solve

EXPERIMENT_THICKNESSES = (0.3, 0.2, 0.15, 0.1, 0.075, 0.05)
EXPERIMENT_LADDER = (0.01, 0.02, 0.04, 0.08, 0.16)


def build_parser():
    p = argparse.ArgumentParser(
        prog="jacshape",
        description="maps with a prescribed Jacobian determinant, "
        "identity near the boundary",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, domain=True):
        if domain:
            sp.add_argument("--domain", default="disk",
                            help="disk|square|interval|mask:<path>")
            sp.add_argument("--resolution", type=int, default=128)
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--config", default=None,
                        help="JSON config file; its entries override flags")
        sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("solve", help="solve det grad(phi) = f")
    common(sp)
    sp.add_argument("--f", dest="f_path", default="sample:bump",
                    help="density file (.json/.csv) or sample:bump|sample:seeded")
    sp.add_argument("--amplitude", type=float, default=0.5,
                    help="amplitude of generated sample densities")
    sp.add_argument("--method", default="auto",
                    choices=["auto", "moser", "fixedpoint", "full", "general",
                             "oned"])
    sp.add_argument("--collar", type=float, default=0.15)
    sp.add_argument("--distance", type=float, default=None)
    sp.add_argument("--tol-det", type=float, default=0.01)
    sp.add_argument("--tol-support", type=float, default=None,
                    help="default: 1e-6 + 5 h^2")
    sp.add_argument("--tol-mass", type=float, default=0.005,
                    help="relative mass tolerance")
    sp.add_argument("--time-steps", type=int, default=16)
    sp.add_argument("--interp", default="bicubic",
                    choices=["bilinear", "bicubic"])
    sp.add_argument("--mollify-radius", type=float, default=None)
    sp.add_argument("--bump-eta", type=float, default=0.05)
    sp.add_argument("--dump-flow", action="store_true")

    sp = sub.add_parser("verify", help="recheck residuals of a solved map")
    common(sp, domain=False)
    sp.add_argument("--phi", dest="phi_path", required=True)
    sp.add_argument("--f", dest="f_path", required=True)
    sp.add_argument("--collar", type=float, default=None)
    sp.add_argument("--distance", type=float, default=None)
    sp.add_argument("--tol-det", type=float, default=0.01)
    sp.add_argument("--tol-support", type=float, default=None)
    sp.add_argument("--tol-mass", type=float, default=0.005)

    sp = sub.add_parser("correct-volume",
                        help="make a given map volume preserving")
    common(sp, domain=False)
    sp.add_argument("--phi", dest="phi_path", required=True,
                    help="the map to correct (.json)")
    sp.add_argument("--distance", type=float, required=True)
    sp.add_argument("--tol-det", type=float, default=0.01)
    sp.add_argument("--time-steps", type=int, default=16)
    sp.add_argument("--interp", default="bicubic",
                    choices=["bilinear", "bicubic"])

    sp = sub.add_parser("experiment-collar",
                        help="norm-ratio scaling as the collar thins")
    common(sp)
    sp.add_argument("--amplitude", type=float, default=0.02,
                    help="reference amplitude for the norm-ratio column")

    sp = sub.add_parser("oracle-1d", help="closed-form interval solve")
    common(sp)
    sp.add_argument("--f", dest="f_path", default="sample:bump")
    sp.add_argument("--amplitude", type=float, default=0.3)
    sp.add_argument("--collar", type=float, default=0.1)
    return p


def _parse_domain(args):
    name = args.domain
    if name == "disk":
        spec = {"shape": "disk", "center": [0.0, 0.0], "radius": 1.0}
    elif name == "square":
        spec = {"shape": "rectangle", "corners": [[0.0, 0.0], [1.0, 1.0]]}
    elif name == "interval":
        spec = {"shape": "interval", "a": 0.0, "b": 1.0}
    elif name.startswith("mask:"):
        spec = {"shape": "mask", "path": name[5:]}
    else:
        raise UsageError(f"unknown domain {name!r}")
    return build_domain(spec, getattr(args, "resolution", None))


def _load_density(args, domain=None):
    path = args.f_path
    if path.startswith("sample:"):
        kind = path[7:]
        if domain is None:
            domain = _parse_domain(args)
        amp = getattr(args, "amplitude", 0.5)
        if kind == "bump":
            if domain.dim == 1:
                return fixtures.bump_density_1d(domain, amp)
            return fixtures.radial_dipole_density(domain, amp)
        if kind == "seeded":
            return fixtures.seeded_density(domain, amp, args.seed)
        raise UsageError(f"unknown sample {kind!r}")
    field = io.load_field(path, domain, fill_kind="one")
    if not isinstance(field, ScalarField):
        raise InputIOError(f"{path} does not hold a scalar density")
    return field


def _support_tol(args, domain):
    if args.tol_support is not None:
        return args.tol_support
    return 1e-6 + 5.0 * domain.h_grid**2


def _write_report(report, out, name="report.json"):
    path = os.path.join(out, name)
    with open(path, "w") as fh:
        fh.write(report.to_json())
        fh.write("\n")
    return path


def _solve_artifacts(out, phi, f, report):
    io.save_json(phi, os.path.join(out, "phi.json"))
    io.save_json(f, os.path.join(out, "f.json"))
    _write_report(report, out)
    io.save_heatmap(f, os.path.join(out, "f.pgm"))
    io.save_heatmap(jacobian_det(phi), os.path.join(out, "det.pgm"))
    dom = phi.domain
    disp = scalar_field(dom, phi.displacement.magnitude(), "zero")
    io.save_heatmap(disp, os.path.join(out, "displacement.pgm"))


def cmd_solve(args):
    dom = None
    if not args.f_path.startswith("sample:") and args.f_path.endswith(".csv"):
        dom = _parse_domain(args)
    f = _load_density(args, dom)
    dom = f.domain
    cfg = FixedPointConfig()
    flow_cfg = FlowConfig(time_steps=args.time_steps, interp=args.interp)
    trajectory = [] if args.dump_flow else None
    if args.method == "moser":
        col = make_collar(dom, args.collar)
        phi, report = moser_solve(f, col, flow_cfg, trajectory_log=trajectory)
    else:
        phi, report = solve(
            f,
            method=args.method,
            distance=args.distance,
            collar_epsilon=args.collar,
            cfg=cfg,
            flow_cfg=flow_cfg,
            mollify_radius=args.mollify_radius,
            bump_eta=args.bump_eta,
        )
    os.makedirs(args.out, exist_ok=True)
    _solve_artifacts(args.out, phi, f, report)
    if trajectory is not None:
        for k, pts in enumerate(trajectory):
            disp = np.zeros((dom.dim,) + dom.grid_shape)
            disp[(slice(None),) + np.nonzero(dom.mask)] = (
                pts - dom.coords()[:, dom.mask].T
            ).T
            from .fields import VectorField

            io.save_json(
                GridMap(displacement=VectorField(domain=dom, components=disp)),
                os.path.join(args.out, f"flow_{k:03d}.json"),
            )
    tol_support = _support_tol(args, dom)
    ok = report.within(
        tol_det=args.tol_det,
        tol_support=tol_support,
        tol_mass=args.tol_mass * dom.measure(),
    )
    print(report.to_json())
    if not ok:
        raise ResidualToleranceError(
            f"residuals exceed tolerances (det {report.det_residual_inf:.3e} "
            f"vs {args.tol_det}, support {report.support_violation_inf:.3e} "
            f"vs {tol_support:.3e}, mass {report.mass_error:.3e})"
        )
    return 0


def verify_report(phi: GridMap, f: ScalarField, distance=None,
                  collar_epsilon=None):
    """Recompute the residual record of a map against a density, using the
    same arithmetic as the solvers so results match bit for bit."""
    dom = phi.domain
    if collar_epsilon is not None:
        col = make_collar(dom, collar_epsilon)
        rep = map_report(phi, f, col, "verify", 0)
        return rep
    det = jacobian_det(phi)
    det_res = float(np.abs(det.values - f.values)[dom.mask].max())
    if distance is not None:
        vd = identity_region(dom, distance)
        support = float(phi.displacement.magnitude()[vd].max(initial=0.0))
    else:
        support = 0.0
    return SolveReport(
        method="verify",
        det_residual_inf=det_res,
        support_violation_inf=support,
        mass_error=abs(integrate(det) - integrate(f)),
        iterations=0,
        collar_thickness=0.0,
        norm_ratio=0.0,
    )


def cmd_verify(args):
    phi = io.load_field(args.phi_path)
    f = io.load_field(args.f_path)
    if not isinstance(phi, GridMap) or not isinstance(f, ScalarField):
        raise InputIOError("verify needs a map file (--phi) and a density (--f)")
    if not phi.domain.same_grid(f.domain):
        from .errors import ShapeMismatchError

        raise ShapeMismatchError("map and density grids differ")
    report = verify_report(phi, f, distance=args.distance,
                           collar_epsilon=args.collar)
    os.makedirs(args.out, exist_ok=True)
    _write_report(report, args.out, "verify.json")
    print(report.to_json())
    tol_support = _support_tol(args, phi.domain)
    if not report.within(tol_det=args.tol_det, tol_support=tol_support,
                         tol_mass=args.tol_mass * phi.domain.measure()):
        raise ResidualToleranceError("verification failed the tolerances")
    return 0


def cmd_correct_volume(args):
    psi = io.load_field(args.phi_path)
    if not isinstance(psi, GridMap):
        raise InputIOError("--phi must hold a map file")
    flow_cfg = FlowConfig(time_steps=args.time_steps, interp=args.interp)
    corrected, report = volume_correct(psi, args.distance, flow_cfg=flow_cfg)
    os.makedirs(args.out, exist_ok=True)
    io.save_json(corrected, os.path.join(args.out, "corrected.json"))
    _write_report(report, args.out)
    io.save_heatmap(jacobian_det(corrected), os.path.join(args.out, "det.pgm"))
    print(report.to_json())
    if report.det_residual_inf > args.tol_det:
        raise ResidualToleranceError(
            f"corrected determinant residual {report.det_residual_inf:.3e} "
            f"exceeds {args.tol_det}"
        )
    return 0


def _spearman(xs, ys):
    """Spearman rank correlation (scipy-free for two short sequences)."""
    def ranks(v):
        order = np.argsort(v, kind="stable")
        r = np.empty(len(v))
        r[order] = np.arange(1, len(v) + 1)
        return r

    rx, ry = ranks(np.asarray(xs)), ranks(np.asarray(ys))
    if len(xs) < 2:
        return float("nan")
    cx = rx - rx.mean()
    cy = ry - ry.mean()
    denom = np.sqrt((cx**2).sum() * (cy**2).sum())
    return float((cx * cy).sum() / denom) if denom else float("nan")


def cmd_experiment_collar(args):
    dom = _parse_domain(args)
    if dom.dim != 2:
        raise UsageError("the collar experiment runs on the disk")
    template = fixtures.radial_dipole_density(
        dom, 1.0, r_core=0.18, r_ring=0.3, w_ring=0.1
    )
    shape = template.values - 1.0  # unit-amplitude zero-mean profile
    os.makedirs(args.out, exist_ok=True)
    rows = []
    for delta in EXPERIMENT_THICKNESSES:
        row = {"delta": delta, "norm_ratio": float("nan"),
               "epsilon_gate_max": 0.0, "det_residual": float("nan"),
               "error": ""}
        try:
            col = make_collar(dom, delta)
            open_gate = FixedPointConfig(epsilon_threshold=1e6)
            f_ref = scalar_field(dom, 1.0 + args.amplitude * shape, "one")
            phi, rep = fixedpoint_solve(f_ref, col, open_gate)
            row["norm_ratio"] = rep.norm_ratio
            row["det_residual"] = rep.det_residual_inf
            for amp in EXPERIMENT_LADDER:
                f_amp = scalar_field(dom, 1.0 + amp * shape, "one")
                try:
                    fixedpoint_solve(f_amp, col, open_gate)
                    row["epsilon_gate_max"] = amp
                except JacshapeError:
                    break
        except JacshapeError as exc:
            row["error"] = type(exc).__name__
        rows.append(row)
    cols = ["delta", "norm_ratio", "epsilon_gate_max", "det_residual", "error"]
    with open(os.path.join(args.out, "collar_experiment.csv"), "w") as fh:
        fh.write(",".join(cols) + "\n")
        for row in rows:
            fh.write(",".join(repr(row[c]) if c != "error" else row[c]
                              for c in cols) + "\n")
    with open(os.path.join(args.out, "collar_experiment.dat"), "w") as fh:
        fh.write("# " + " ".join(cols[:-1]) + "\n")
        for row in rows:
            fh.write(" ".join(repr(row[c]) for c in cols[:-1]) + "\n")
    good = [r for r in rows if not r["error"] and np.isfinite(r["norm_ratio"])]
    rho = _spearman([1.0 / r["delta"] for r in good],
                    [r["norm_ratio"] for r in good])
    summary = {
        "rows": len(rows),
        "successful_rows": len(good),
        "spearman_norm_ratio_vs_inverse_thickness": rho,
        "note": (
            "observed trend of the solve's norm ratio as the collar thins; "
            "reported as a measurement, no divergence asserted"
        ),
    }
    with open(os.path.join(args.out, "collar_experiment_summary.json"), "w") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_oracle_1d(args):
    args.domain = "interval"
    dom = _parse_domain(args)
    f = _load_density(args, dom)
    phi = solve_1d(f)
    col = make_collar(dom, max(dom.h_grid, min(args.collar,
                                               0.5 * inradius(dom))))
    report = map_report(phi, f, col, "oned", 1)
    os.makedirs(args.out, exist_ok=True)
    io.save_json(phi, os.path.join(args.out, "phi.json"))
    io.save_csv(phi, os.path.join(args.out, "phi.csv"))
    _write_report(report, args.out)
    print(report.to_json())
    return 0


COMMANDS = {
    "solve": cmd_solve,
    "verify": cmd_verify,
    "correct-volume": cmd_correct_volume,
    "experiment-collar": cmd_experiment_collar,
    "oracle-1d": cmd_oracle_1d,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            with open(args.config) as fh:
                overrides = json.load(fh)
        except (OSError, ValueError) as exc:
            print(f"jacshape: bad config file: {exc}", file=sys.stderr)
            return UsageError.exit_code
        for key, value in overrides.items():
            dest = key.replace("-", "_")
            if not hasattr(args, dest):
                print(f"jacshape: unknown config key {key!r}", file=sys.stderr)
                return UsageError.exit_code
            setattr(args, dest, value)
    try:
        return COMMANDS[args.command](args)
    except JacshapeError as exc:
        print(f"jacshape: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
