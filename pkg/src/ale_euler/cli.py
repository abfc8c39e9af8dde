"""Command-line front end: simulate, verify, reconstruct, diagnose.

Exit codes: 0 all checks pass / run complete, 1 check or run failure,
2 configuration error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from .calculus import (NormReport, l2_norm, linf_norm, norm_report,
                       variable_curl)
from .coefficients import (AleMapCoefficients, IdentityCoefficients,
                           compatibility_integral, cofactor_fields,
                           flux_integral, piola_residual, standard_eta)
from .config import DEFAULTS, load_config
from .dynamics import simulate
from .diagnostics import bkm_integrand, monitor_summary
from .elliptic import (assemble_raw, assemble_reduced, solve_neumann,
                       variable_divergence_defect)
from .errors import AleEulerError, ConfigError, SnapshotError, StepError
from .fixtures import random_divergence_free_view, shear_flow
from .grid import Grid, VectorField
from .snapshots import read_snapshot, write_snapshot
from .vorticity import reconstruct_velocity, stretching_identity_residual


def _threads_from(config) -> int:
    env = os.environ.get("ALE_EULER_THREADS")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"ALE_EULER_THREADS must be an integer: {env}") from exc
    return int(config["threads"])


def _apply_threads(n: int):
    if n > 0:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS"):
            os.environ.setdefault(var, str(n))


# ---------------------------------------------------------------------------
# simulate

def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    _apply_threads(_threads_from(cfg))
    grid = cfg.build_grid()
    cs = cfg.build_coefficients(grid)
    v0 = cfg.build_initial(grid, cs)
    out_dir = Path(args.output_dir or cfg["output"]["dir"])
    result = simulate(cs, v0, provenance=cfg.provenance(),
                      **cfg.simulate_kwargs())

    out_dir.mkdir(parents=True, exist_ok=True)
    checksums = []
    norm_rows = [NormReport.CSV_HEADER]
    for step, snap in result.snapshots:
        manifest = write_snapshot(snap, out_dir / f"snap_{step:06d}")
        checksums.extend(e["crc32"] for e in manifest["fields"])
        norm_rows.append(norm_report("v", snap.fields["v"], snap.t).csv_row())
        zeta = variable_curl(snap.fields["v"], cs.sample(snap.t).b)
        norm_rows.append(norm_report("zeta", zeta, snap.t).csv_row())
    (out_dir / "norms.csv").write_text("\n".join(norm_rows) + "\n")
    rec_lines = [result.records[0].CSV_HEADER]
    rec_lines += [r.csv_row() for r in result.records]
    (out_dir / "monitor.csv").write_text("\n".join(rec_lines) + "\n")

    last = result.records[-1]
    print(f"simulate: {len(result.reports)} steps to t={last.t:.6g}, "
          f"{len(result.snapshots)} snapshots -> {out_dir}")
    print(f"  max |U| {max(r.max_boundary_defect for r in result.records):.3e}, "
          f"max div defect {max(r.div_defect_linf for r in result.records):.3e}, "
          f"guard tripped: {result.guard_tripped}")
    print(f"  manifest checksum tag {sum(checksums) & 0xFFFFFFFF:08x}")
    return 0


# ---------------------------------------------------------------------------
# verify

def _check(name, value, threshold, mode="le"):
    ok = value <= threshold if mode == "le" else value >= threshold
    return {"name": name, "value": value, "threshold": threshold,
            "mode": mode, "ok": ok}


def _verify_battery(cfg) -> list:
    checks = []
    amp = cfg["coefficients"]["amplitude"]
    rate = cfg["coefficients"]["rate"]
    freq = cfg["coefficients"]["frequency"]

    # cofactor structure and Piola residual convergence
    res, ids = [], []
    for n in (16, 32):
        g = Grid(n, n, n + 1)
        cs = AleMapCoefficients(g, standard_eta(amp, freq, rate))
        s = cs.sample(0.3)
        res.append(linf_norm(piola_residual(s.b, g).data))
        ids.append(linf_norm(s.a - s.b / s.J[..., None, None]))
    order = float(np.log2(res[0] / res[1]))
    checks.append(_check("piola_residual_order(16->32)", abs(order - 2.0), 0.4))
    checks.append(_check("cofactor_identity_max", max(ids), 1e-12))

    # compatibility of the corrected pressure system
    g = Grid(16, 16, 17)
    cs = AleMapCoefficients(g, standard_eta(amp, freq, rate))
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(3):
        vv = random_divergence_free_view(cs, rng, 0.2, t=0.4)
        sys = assemble_reduced(cs, vv.values + 0.05 * rng.standard_normal(g.shape + (3,)),
                               0.4)
        worst = max(worst, abs(sys.compatibility_residual()))
    checks.append(_check("compatibility_defect", worst,
                         cfg["elliptic"]["compat_tol"]))
    cs_bad = AleMapCoefficients(g, standard_eta(0.05, 1, 2.0,
                                                volume_preserving=False))
    sys_bad = assemble_reduced(cs_bad, np.zeros(g.shape + (3,)), 0.4,
                               include_correction=False)
    checks.append(_check("violation_detected_without_correction",
                         abs(sys_bad.compatibility_residual()), 1e-3, mode="ge"))

    # quadratic stretching identity on an analytic battery
    worst = 0.0
    for k in range(25):
        rng_k = np.random.default_rng(100 + k)
        gk = Grid(8, 8, 9)
        csk = (IdentityCoefficients(gk) if k % 5 == 0 else
               AleMapCoefficients(gk, standard_eta(0.02 + 0.01 * (k % 3), 1 + k % 2,
                                                   1.0)))
        vv = random_divergence_free_view(csk, rng_k, 0.5, t=0.2)
        worst = max(worst, stretching_identity_residual(
            csk.sample(0.2).b, vv, gk, 0.2))
    checks.append(_check("stretching_identity_residual", worst, 1e-11))

    # raw and reduced pressure problems agree on compliant data
    g = Grid(16, 16, 17)
    cs = AleMapCoefficients(g, standard_eta(amp, freq, rate))
    vv = random_divergence_free_view(cs, np.random.default_rng(3), 0.3, t=0.25)
    q_raw, _ = solve_neumann(assemble_raw(cs, vv, 0.25), tol=1e-11)
    q_red, _ = solve_neumann(assemble_reduced(cs, vv, 0.25), tol=1e-11)
    checks.append(_check("raw_reduced_pressure_gap",
                         l2_norm(q_raw.data - q_red.data, g), 1e-8))

    # flux necessity along a short run of the configured problem
    g = Grid(16, 16, 17)
    cs = AleMapCoefficients(g, standard_eta(amp, freq, rate))
    result = simulate(cs, np.zeros(g.shape + (3,)), tfinal=0.05,
                      fixed_dt=0.01, every_n_steps=0, div_tol=1e-4)
    flux = max(r.flux_residual for r in result.records)
    checks.append(_check("flux_necessity", flux, 1e-7))
    return checks


def cmd_verify(args) -> int:
    cfg = load_config(args.config)
    _apply_threads(_threads_from(cfg))
    checks = _verify_battery(cfg)
    width = max(len(c["name"]) for c in checks)
    failed = 0
    for c in checks:
        tag = "PASS" if c["ok"] else "FAIL"
        rel = "<=" if c["mode"] == "le" else ">="
        print(f"{tag}  {c['name']:<{width}}  {c['value']:.3e} {rel} {c['threshold']:.1e}")
        failed += 0 if c["ok"] else 1
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return 0 if failed == 0 else 1


# ---------------------------------------------------------------------------
# reconstruct

def _coefficients_from_provenance(snap):
    text = snap.provenance.get("config")
    if not text:
        return IdentityCoefficients(snap.grid)
    from .config import parse_config
    cfg = parse_config(text, source="<snapshot provenance>")
    return cfg.build_coefficients(snap.grid)


def cmd_reconstruct(args) -> int:
    snap = read_snapshot(args.input)
    cs = _coefficients_from_provenance(snap)
    g = snap.grid
    if "v" not in snap.fields:
        raise SnapshotError(f"{args.input}: snapshot has no velocity field")
    v = snap.fields["v"].data
    t = snap.t
    s = cs.sample(t)
    div = variable_divergence_defect(cs, v, t)
    zeta = variable_curl(v, s.b, g).data
    flux = (-np.einsum("xyi,xyi->xy", s.b[:, :, 0, 2, :], v[:, :, 0, :]),
            np.einsum("xyi,xyi->xy", s.b[:, :, -1, 2, :], v[:, :, -1, :]))
    rec = reconstruct_velocity(cs, div, zeta, flux, v, t=t)
    err = rec.data - v
    rel = l2_norm(err, g) / max(l2_norm(v, g), 1e-30)
    lines = ["metric,value",
             f"rel_l2_error,{rel!r}",
             f"linf_error,{linf_norm(err)!r}",
             f"l2_reference,{l2_norm(v, g)!r}"]
    out = Path(args.csv or (Path(args.input) / "reconstruction.csv"))
    out.write_text("\n".join(lines) + "\n")
    print(f"reconstruct: relative L2 error {rel:.3e} "
          f"(Linf {linf_norm(err):.3e}) -> {out}")
    return 0


# ---------------------------------------------------------------------------
# diagnose

def cmd_diagnose(args) -> int:
    base = Path(args.input)
    if not base.is_dir():
        raise SnapshotError(f"{base} is not a directory")
    snapdirs = sorted(base.glob("snap_*"))
    if not snapdirs:
        raise SnapshotError(f"{base} holds no snapshots")
    snaps = [read_snapshot(d) for d in snapdirs]
    cs = _coefficients_from_provenance(snaps[0])
    from .dynamics import State
    records = []
    for snap in snaps:
        state = State(snap.fields["v"], snap.fields["q"], snap.t)
        records.append(bkm_integrand(cs, state))
    summary = monitor_summary(records)
    max_u = 0.0
    max_div = 0.0
    for snap in snaps:
        from .elliptic import normal_trace_defect
        ub, ut = normal_trace_defect(cs, snap.fields["v"].data, snap.t)
        max_u = max(max_u, linf_norm(ub), linf_norm(ut))
        bdiv = variable_divergence_defect(cs, snap.fields["v"].data, snap.t)
        from .coefficients import divergence_target
        max_div = max(max_div, linf_norm(bdiv - divergence_target(cs, snap.t)))
    lines = [records[0].CSV_HEADER] + [r.csv_row() for r in records]
    lines.append(f"# K,{summary['K']!r}")
    lines.append(f"# h3_within_2K,{summary['h3_within_2K']}")
    lines.append(f"# bkm_integral,{summary['bkm_integral']!r}")
    lines.append(f"# min_stretch_margin,{summary['min_stretch_margin']!r}")
    lines.append(f"# max_U,{max_u!r}")
    lines.append(f"# max_div_defect,{max_div!r}")
    out = Path(args.csv or (base / "bkm.csv"))
    out.write_text("\n".join(lines) + "\n")
    print(f"diagnose: {len(records)} snapshots, K={summary['K']:.6g}, "
          f"BKM integral {summary['bkm_integral']:.6g}, "
          f"h3<=2K: {summary['h3_within_2K']} -> {out}")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ale-euler",
        description="Numerical laboratory for the variable-coefficient "
                    "incompressible Euler system in a periodic channel.")
    sub = parser.add_subparsers(dest="command", required=True)

    defaults = ", ".join(
        f"{sec}.{k}={v}" for sec, tab in DEFAULTS.items()
        if isinstance(tab, dict) for k, v in tab.items())

    p = sub.add_parser("simulate", help="advance a configured run and write "
                                        "the trajectory",
                       epilog=f"config keys and defaults: threads=0, {defaults}")
    p.add_argument("--config", required=True)
    p.add_argument("--output-dir", default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="run the identity battery "
                                      "(cofactor structure, compatibility, "
                                      "stretching identity, raw/reduced "
                                      "agreement, flux necessity)",
                       epilog=f"config keys and defaults: threads=0, {defaults}")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("reconstruct", help="rebuild the velocity of a "
                                           "snapshot from divergence, "
                                           "vorticity and wall flux")
    p.add_argument("--input", required=True)
    p.add_argument("--csv", default=None)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("diagnose", help="blow-up monitor report for a "
                                        "trajectory directory")
    p.add_argument("--input", required=True)
    p.add_argument("--csv", default=None)
    p.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (SnapshotError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    except (StepError, AleEulerError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
