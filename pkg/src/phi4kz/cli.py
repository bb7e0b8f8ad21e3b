"""Command-line interface: local solves, ground states, quenches, analysis.

Every compute command takes a manifest (``--manifest``) and an output
directory (``--out``); outputs are deterministic given the manifest and are
never overwritten without ``--overwrite``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import __version__, kernels
from .analysis import (
    classical_exponents,
    crossover_amplitude_threshold,
    crossover_time,
    fit_crossover,
    fit_gap_prefactor,
    fit_powerlaw,
    freeze_out,
    ginzburg_number,
    ginzburg_width_criterion,
    ginzburg_width_rg,
    predict_exponents,
    quantum_exponents,
)
from .dmrg import first_gap, gap_table, ground_state
from .errors import ManifestError, Phi4KzError
from .local_solver import LocalHamiltonianSpec, site_operators, solve_local
from .manifest import Manifest
from .model import LatticeSpec, assemble, schedule
from .mps import MatrixProductState, TruncationPolicy
from .observables import correlator_profile, correlation_length
from .oracle import DenseState, dense_correlator, dense_evolve, dense_ground
from .quench import QuenchRun, average_curves, run as run_quench, sweep
from .records import read_records, write_records, write_table
from .tebd import evolve_total


def _fail(kind: str, message: str, code: int):
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    return code


def _outdir(args, manifest: Manifest) -> str:
    out = args.out or manifest.output_dir
    os.makedirs(out, exist_ok=True)
    return out


# -- subcommands ----------------------------------------------------------------


def cmd_solve_local(args) -> int:
    manifest = Manifest.load(args.manifest)
    out = _outdir(args, manifest)
    model = manifest.model
    eps_c = model["eps_tilde_c"]
    eps_values = args.eps_tilde or [eps_c + 0.5, eps_c, eps_c - 0.5]
    rows = []
    for eps_tilde in eps_values:
        spec = LocalHamiltonianSpec(
            model["hbar"], model["g"], model["omega0"], float(eps_tilde),
            manifest.truncation["n_rep"], manifest.truncation["omega_ref"])
        eig = solve_local(spec, manifest.truncation["d"])
        for q in range(eig.d):
            rows.append((eig.eps_tilde, q, eig.energies[q],
                         int(eig.parities[q]), eig.residuals[q]))
    path = os.path.join(out, "local_spectrum.tsv")
    write_table(path, ("eps_tilde", "q", "energy", "parity", "residual"),
                rows, overwrite=args.overwrite)
    print(f"wrote {path} ({len(rows)} rows)")
    return 0


def cmd_ground(args) -> int:
    manifest = Manifest.load(args.manifest)
    out = _outdir(args, manifest)
    model = manifest.model
    eps_c = model["eps_tilde_c"]
    settings = manifest.dmrg_settings()
    d = manifest.truncation["d"]
    records = []
    gap_rows = []
    width = ginzburg_width_rg(model["hbar"], model["g"], model["omega0"],
                              model["c_prime"])
    gap_eps = np.linspace(width / 4.0, width, args.gap_points)
    for length in manifest.lattice_sizes:
        lattice = LatticeSpec(length, manifest.model_params())
        for eps in (-0.5, 0.5):
            eps_tilde = eps_c - eps
            spec = LocalHamiltonianSpec(model["hbar"], model["g"], model["omega0"],
                                        eps_tilde, manifest.truncation["n_rep"],
                                        manifest.truncation["omega_ref"])
            h = assemble(lattice, site_operators(solve_local(spec, d)), eps_tilde)
            res = ground_state(h, settings)
            records.append({
                "kind": "ground", "length": length, "eps": eps,
                "eps_tilde": eps_tilde, "energy": res.energy,
                "converged": res.converged, "sweeps": res.sweeps,
            })

        def h_at(eps):
            eps_tilde = eps_c + abs(eps)  # disordered side of the ramp
            spec = LocalHamiltonianSpec(model["hbar"], model["g"], model["omega0"],
                                        eps_tilde, manifest.truncation["n_rep"],
                                        manifest.truncation["omega_ref"])
            return assemble(lattice, site_operators(solve_local(spec, d)), eps_tilde)

        for rec in gap_table(h_at, gap_eps, settings):
            rec["omega0"] = model["omega0"]
            gap_rows.append((rec["eps"], rec["omega0"], rec["length"], rec["gap"],
                             rec["overlap"], rec["ground_converged"] and rec["excited_converged"]))
            records.append({"kind": "gap", **rec})
    write_records(os.path.join(out, "ground_records.jsonl"), records,
                  manifest.hash(), overwrite=args.overwrite)
    write_table(os.path.join(out, "gap_table.tsv"),
                ("eps", "omega0", "length", "gap", "overlap", "converged"),
                gap_rows, overwrite=args.overwrite)
    print(f"wrote {len(records)} ground/gap records to {out}")
    return 0


def _execute_runs(manifest: Manifest, args, parallel: bool):
    runs = manifest.quench_runs()
    out = _outdir(args, manifest)
    workdir = os.path.join(out, "checkpoints")
    if manifest.checkpoints or args.checkpoint_every:
        os.makedirs(workdir, exist_ok=True)
    else:
        workdir = None
    if parallel:
        results, failures = sweep(runs, workers=args.workers)
    else:
        from .quench import with_shared_references

        results, failures = [], []
        for qrun in with_shared_references(runs):
            try:
                results.append(run_quench(qrun, workdir=workdir,
                                          checkpoint_every=args.checkpoint_every))
            except Phi4KzError as exc:
                failures.append({"label": qrun.label,
                                 "error": f"{type(exc).__name__}: {exc}"})
    return results, failures, out


def _write_run_outputs(manifest, results, failures, out, overwrite, averaged):
    records = [r.record() for r in results]
    for rec, res in zip(records, results):
        rec["kind"] = "quench"
        rec["wall_time"] = res.wall_time
    write_records(os.path.join(out, "quench_records.jsonl"), records,
                  manifest.hash(), overwrite=overwrite)
    for res in results:
        if res.correlator_l is not None:
            rows = list(zip(res.correlator_l, res.correlator_c, res.correlator_spread))
            write_table(os.path.join(out, f"correlator_{res.label}.tsv"),
                        ("l", "c", "spread"), rows, overwrite=overwrite)
    if failures:
        write_records(os.path.join(out, "failures.jsonl"), failures,
                      manifest.hash(), overwrite=overwrite)
    if averaged:
        curves = average_curves(results)
        rows = [(c["omega0"], c["tau_q"], c["xi_mean"], c["e_exc_mean"], c["n_runs"])
                for c in curves]
        write_table(os.path.join(out, "size_averaged.tsv"),
                    ("omega0", "tau_q", "xi_mean", "e_exc_mean", "n_runs"),
                    rows, overwrite=overwrite)
    n_invalid = sum(1 for r in results if not r.valid)
    print(f"completed {len(results)} runs ({n_invalid} flagged invalid, "
          f"{len(failures)} failed)")


def cmd_quench(args) -> int:
    manifest = Manifest.load(args.manifest)
    results, failures, out = _execute_runs(manifest, args, parallel=False)
    _write_run_outputs(manifest, results, failures, out, args.overwrite, averaged=False)
    return 0 if not failures else 1


def cmd_sweep(args) -> int:
    manifest = Manifest.load(args.manifest)
    results, failures, out = _execute_runs(manifest, args, parallel=True)
    _write_run_outputs(manifest, results, failures, out, args.overwrite, averaged=True)
    return 0 if not failures else 1


def _load_curve(record_paths, observable):
    """Size-averaged (tau_q, value) curve from quench record files."""
    records = []
    for path in record_paths:
        records.extend(read_records(path))
    rows = [r for r in records if r.get("kind") == "quench"]
    n_invalid = sum(1 for r in rows if not r.get("valid"))
    groups = {}
    for r in rows:
        if not r.get("valid"):
            continue
        value = r.get(observable)
        if value is None:
            continue
        groups.setdefault(float(r["schedule"]["tau_q"]), []).append(float(value))
    curve = sorted((tau, float(np.mean(vals))) for tau, vals in groups.items())
    return curve, n_invalid


def cmd_analyze(args) -> int:
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    report = {"mode": args.mode, "observable": args.observable}

    if args.mode == "criteria":
        manifest = Manifest.load(args.manifest)
        model = manifest.model
        hbar, g, omega0 = model["hbar"], model["g"], model["omega0"]
        width_rg = ginzburg_width_rg(hbar, g, omega0, model["c_prime"])
        width_crit = ginzburg_width_criterion(hbar, g, omega0)
        report.update({
            "eps_cross_rg": width_rg,
            "eps_cross_criterion": width_crit,
            "eps_tilde_c": model["eps_tilde_c"],
            "amplitude_threshold_4ghbar": crossover_amplitude_threshold(g, hbar),
            "ramp_starts_classical": 0.5 > width_crit,
            "ginzburg_number_at_ramp_start": ginzburg_number(
                omega0, model["eps_tilde_c"] + 0.5, model["eps_tilde_c"], hbar, g),
            "predictions": {
                "quantum": predict_exponents(quantum_exponents()),
                "classical": predict_exponents(classical_exponents()),
            },
        })
        phi = args.phi
        if args.gap_table:
            rows = read_records(args.gap_table) if args.gap_table.endswith("jsonl") else None
            if rows is None:
                data = np.loadtxt(args.gap_table)
                eps_vals, gaps = data[:, 0], data[:, 3]
            else:
                gap_rows = [r for r in rows if r.get("kind") == "gap"]
                eps_vals = [r["eps"] for r in gap_rows]
                gaps = [r["gap"] for r in gap_rows]
            law = fit_gap_prefactor(eps_vals, gaps, window=(width_rg / 4, width_rg))
            report["gap_law"] = {"phi": law.phi, "znu": law.znu,
                                 "window": law.fit_window, "residual": law.residual}
            phi = law.phi
        if phi:
            tau_x = crossover_time(quantum_exponents(), hbar, width_rg, phi)
            report["crossover_time"] = tau_x
            report["freeze_out_at_crossover"] = freeze_out(
                tau_x,
                fit_gap_prefactor([width_rg], [phi * width_rg]),
                quantum_exponents(), hbar, eps_cross=width_rg)
    else:
        if not args.records:
            return _fail("usage", "analyze needs --records for fit modes", 2)
        curve, n_invalid = _load_curve(args.records, args.observable)
        report["n_invalid_excluded"] = n_invalid
        report["curve"] = curve
        if len(curve) == 0:
            return _fail("data", "no valid records to analyze", 1)
        if args.mode == "powerlaw":
            pts = [(t, v) for t, v in curve]
            if args.observable == "e_exc":
                fit = fit_powerlaw(pts)
                report["fit"] = {"exponent": fit.exponent, "uncertainty": fit.uncertainty,
                                 "prefactor": fit.prefactor, "window": fit.window,
                                 "residual": fit.residual}
            else:
                fit = fit_powerlaw(pts)
                report["fit"] = {"exponent": fit.exponent, "uncertainty": fit.uncertainty,
                                 "prefactor": fit.prefactor, "window": fit.window,
                                 "residual": fit.residual}
            rows = [(t, v, fit.prefactor * t ** fit.exponent) for t, v in curve]
            write_table(os.path.join(out, f"fit_{args.observable}.tsv"),
                        ("tau_q", args.observable, "fitted"), rows,
                        overwrite=args.overwrite)
        elif args.mode == "crossover":
            fit = fit_crossover(curve, init_break=args.init_break)
            report["fit"] = {
                "exponent_fast": fit.exponent_fast,
                "exponent_slow": fit.exponent_slow,
                "breakpoint": fit.breakpoint,
                "breakpoint_uncertainty": fit.breakpoint_uncertainty,
                "fallback_single": fit.fallback_single,
                "exponent_single": fit.exponent if fit.fallback_single else None,
                "residual": fit.residual,
            }
            rows = [(t, v) for t, v in curve]
            write_table(os.path.join(out, "crossover_curve.tsv"),
                        ("tau_q", args.observable), rows, overwrite=args.overwrite)

    path = os.path.join(out, f"analyze_{args.mode}.json")
    if os.path.exists(path) and not args.overwrite:
        return _fail("output", f"refusing to overwrite {path}", 2)
    with open(path, "w") as fh:
        json.dump(report, fh, indent=1, sort_keys=True)
    print(json.dumps(report.get("fit", report), indent=1, sort_keys=True))
    print(f"wrote {path}")
    return 0


def cmd_oracle_compare(args) -> int:
    manifest = Manifest.load(args.manifest)
    out = _outdir(args, manifest)
    model = manifest.model
    length = min(manifest.lattice_sizes)
    d = min(manifest.truncation["d"], args.max_d)
    if d ** length > 2 ** 20:
        return _fail("cap", f"d^L = {d}^{length} exceeds the oracle cap", 2)
    eps_c = model["eps_tilde_c"]
    lattice = LatticeSpec(length, manifest.model_params())
    settings = manifest.dmrg_settings()
    rows = []
    for eps in (-0.5, 0.5):
        eps_tilde = eps_c - eps
        spec = LocalHamiltonianSpec(model["hbar"], model["g"], model["omega0"],
                                    eps_tilde, None, manifest.truncation["omega_ref"])
        ops = site_operators(solve_local(spec, d))
        h = assemble(lattice, ops, eps_tilde)
        res = ground_state(h, settings)
        e_dense, state = dense_ground(h)
        rows.append(("ground_energy", f"eps={eps:+g}", res.energy, e_dense,
                     abs(res.energy - e_dense)))
        c_mps = res.psi.expect_two(ops.y_mat, 0, ops.y_mat, 1).real
        c_dense = dense_correlator(state, ops, 0, 1)
        rows.append(("nn_correlator", f"eps={eps:+g}", c_mps, c_dense,
                     abs(abs(c_mps) - abs(c_dense))))
    # dynamics at the critical field
    spec = LocalHamiltonianSpec(model["hbar"], model["g"], model["omega0"],
                                eps_c, None, manifest.truncation["omega_ref"])
    ops = site_operators(solve_local(spec, d))
    h = assemble(lattice, ops, eps_c)
    psi = MatrixProductState.product_state(length, d, 0,
                                           trunc=TruncationPolicy(d * d, 1e-30))
    ref = dense_evolve(DenseState(psi.to_statevector(), length, d), h, args.t_total)
    evolve_total(psi, h, args.t_total, args.dt)
    fid = abs(np.vdot(psi.to_statevector(), ref.vector))
    rows.append(("tebd_fidelity", f"t={args.t_total:g},dt={args.dt:g}", fid, 1.0,
                 1.0 - fid))
    path = os.path.join(out, "oracle_compare.tsv")
    write_table(path, ("quantity", "setting", "mps", "dense", "deviation"),
                rows, overwrite=args.overwrite)
    for row in rows:
        print(f"{row[0]:16s} {row[1]:22s} deviation {row[4]:.3e}")
    print(f"wrote {path}")
    return 0


def cmd_bench(args) -> int:
    rng = np.random.default_rng(0)
    chi, d = args.chi, args.d
    a1 = rng.standard_normal((chi, d, chi)) + 1j * rng.standard_normal((chi, d, chi))
    a2 = rng.standard_normal((chi, d, chi)) + 1j * rng.standard_normal((chi, d, chi))
    gate = np.linalg.qr(rng.standard_normal((d * d, d * d))
                        + 1j * rng.standard_normal((d * d, d * d)))[0]
    variants = ["pure"] + (["compiled"] if kernels.HAVE_COMPILED else [])
    print(f"two-site gate kernel, chi={chi} d={d}, {args.repeat} calls per variant")
    timings = {}
    for name in variants:
        with kernels.force(name):
            kernels.apply_bond_gate(a1, a2, gate, chi, 1e-10, False)  # warm up
            t0 = time.perf_counter()
            for _ in range(args.repeat):
                kernels.apply_bond_gate(a1, a2, gate, chi, 1e-10, False)
            timings[name] = (time.perf_counter() - t0) / args.repeat
        print(f"  {name:9s} {timings[name] * 1e3:8.3f} ms/call")
    if len(timings) == 2:
        print(f"  speedup   {timings['pure'] / timings['compiled']:.2f}x")
    if not kernels.HAVE_COMPILED:
        print("  (compiled kernel not available; pure path only)")
    return 0


# -- entry point -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phi4kz",
        description="Quench simulator for the quartic-oscillator chain: "
                    "truncated-local-basis MPS dynamics and crossover scaling analysis.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, manifest_required=True):
        p.add_argument("--manifest", required=manifest_required,
                       help="YAML/JSON run manifest")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--overwrite", action="store_true",
                       help="allow overwriting existing outputs")

    p = sub.add_parser("solve-local", help="tabulate the truncated local spectrum")
    add_common(p)
    p.add_argument("--eps-tilde", type=float, nargs="*", default=None)
    p.set_defaults(func=cmd_solve_local)

    p = sub.add_parser("ground", help="ground-state records and a gap table")
    add_common(p)
    p.add_argument("--gap-points", type=int, default=5)
    p.set_defaults(func=cmd_ground)

    p = sub.add_parser("quench", help="run the manifest grid serially")
    add_common(p)
    p.add_argument("--checkpoint-every", type=int, default=None,
                   help="snapshot the state every N plateaus")
    p.set_defaults(func=cmd_quench)

    p = sub.add_parser("sweep", help="run the manifest grid with a worker pool")
    add_common(p)
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    p.add_argument("--checkpoint-every", type=int, default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("analyze", help="fit records or evaluate crossover criteria")
    add_common(p, manifest_required=False)
    p.add_argument("--mode", choices=("powerlaw", "crossover", "criteria"),
                   required=True)
    p.add_argument("--records", nargs="*", default=None,
                   help="quench record files (jsonl)")
    p.add_argument("--observable", choices=("xi", "e_exc"), default="xi")
    p.add_argument("--init-break", type=float, default=None)
    p.add_argument("--phi", type=float, default=None,
                   help="gap prefactor for the crossover-time estimate")
    p.add_argument("--gap-table", default=None,
                   help="gap table (tsv or jsonl) to fit the prefactor from")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("oracle-compare",
                       help="paired MPS/dense computations with deviation table")
    add_common(p)
    p.add_argument("--t-total", type=float, default=1.0)
    p.add_argument("--dt", type=float, default=1e-2)
    p.add_argument("--max-d", type=int, default=6)
    p.set_defaults(func=cmd_oracle_compare)

    p = sub.add_parser("bench", help="time the gate kernel, pure vs compiled")
    p.add_argument("--chi", type=int, default=24)
    p.add_argument("--d", type=int, default=8)
    p.add_argument("--repeat", type=int, default=30)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ManifestError as exc:
        return _fail("manifest", str(exc), 2)
    except Phi4KzError as exc:
        return _fail(type(exc).__name__, str(exc), 1)


if __name__ == "__main__":
    sys.exit(main())
