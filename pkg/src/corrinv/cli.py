"""Command-line entry point.

One tool with subcommands that compose through files in the output
directory: `forward` writes the solved field and Cauchy data, `continue`
completes the data to gamma1, `reconstruct` reads the corrosion law off the
completed trace, `sweep` and `check` run the stability experiments, and
`pipeline` chains forward -> continue -> reconstruct -> comparison.

Exit codes (stable, asserted by tests):
    0  success
    1  usage or configuration error
    2  forward solve failed
    3  continuation under-resolved at the requested noise level
    4  no monotone segment / empty recovery interval

All outputs are deterministic for a fixed config and seed: no timestamps,
numbers serialized with 17 significant digits.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from corrinv.config import ConfigError, parse_config
from corrinv.csvio import format_number, read_csv, write_csv
from corrinv.forward import (
    ForwardSolveError,
    boundary_profile,
    extract_cauchy_data,
    solve_forward,
)
from corrinv.geometry import (
    BoundaryTag,
    build_rectangle_mesh,
    export_mesh_csv,
    trace_sample,
)
from corrinv.reconstruction import (
    BoundaryProfile,
    EmptyIntervalError,
    NoMonotoneSegmentError,
    extract_f,
    find_monotone_segment,
    oscillation,
)

__all__ = ["main", "EXIT_OK", "EXIT_CONFIG", "EXIT_FORWARD",
           "EXIT_UNDERRESOLVED", "EXIT_NO_SEGMENT"]

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_FORWARD = 2
EXIT_UNDERRESOLVED = 3
EXIT_NO_SEGMENT = 4


def _say(quiet, *parts):
    if not quiet:
        print(*parts)


def _write_report(path, items):
    lines = [f"{k} = {v if isinstance(v, str) else format_number(v)}"
             for k, v in items]
    Path(path).write_text("\n".join(lines) + "\n")


def _read_report(path):
    out = {}
    for line in Path(path).read_text().splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out


def _solve_stage(settings, quiet):
    mesh = build_rectangle_mesh(settings.domain, settings.mesh_n)
    try:
        u, report = solve_forward(mesh, settings.flux, settings.model)
    except ForwardSolveError as exc:
        print(f"forward: {exc}", file=sys.stderr)
        return None
    _say(quiet, f"forward: {report.iterations} iterations, "
                f"residual {report.residual:.3e}, energy {report.energy:.6g}")
    return mesh, u, report


def _write_forward_outputs(out, mesh, u, report, data, settings):
    export_mesh_csv(mesh, out)
    write_csv(out / "field.csv", ["node", "x", "y", "u"],
              [(i, mesh.nodes[i, 0], mesh.nodes[i, 1], u.values[i])
               for i in range(mesh.nodes.shape[0])])
    write_csv(out / "cauchy.csv", ["t", "psi", "g"],
              list(zip(data.t, data.psi, data.g)))
    profile, _ = boundary_profile(u, mesh, BoundaryTag.GAMMA1)
    write_csv(out / "gamma1.csv", ["t", "u", "dnu"],
              list(zip(profile.t, profile.v, profile.w)))
    _write_report(out / "report.txt", [
        ("iterations", report.iterations),
        ("residual", report.residual),
        ("energy", report.energy),
        ("energy_flag", str(report.energy_flag).lower()),
        ("gamma1_oscillation", oscillation(profile)),
        ("noise_eps", data.eps),
    ])


def _load_cauchy(out, mesh, settings):
    from corrinv.continuation import CauchyData

    table = read_csv(out / "cauchy.csv")
    t = table.column("t")
    curve = trace_sample(mesh, BoundaryTag.GAMMA2, t.size)
    if not np.allclose(curve.t, t, atol=1e-9):
        raise ConfigError(
            "cauchy.csv sample parameters do not match the configured mesh")
    return CauchyData(t=curve.t, psi=table.column("psi"), g=table.column("g"),
                      eps=settings.noise_eps, curve=curve)


def _write_continue_outputs(out, profile, result, mu, under):
    write_csv(out / "gamma1_rec.csv", ["t", "u", "dnu", "du_dt"],
              list(zip(profile.t, profile.v, profile.w, profile.dv)))
    _write_report(out / "fitreport.txt", [
        ("mu", mu),
        ("discrepancy_psi", result.discrepancy_psi),
        ("discrepancy_g", result.discrepancy_g),
        ("discrepancy_dirichlet", result.discrepancy_dirichlet),
        ("discrepancy", result.discrepancy),
        ("basis_size", result.basis.size),
        ("condition_number", result.condition_number),
        ("under_resolved", str(under).lower()),
    ])


def _reconstruct_stage(out, profile, eta_factor, trim_factor, discrepancy,
                       quiet):
    """Segment search + law extraction + stage outputs; returns the
    reconstruction or None when no usable segment exists."""
    threshold = eta_factor * float(np.max(np.abs(profile.dv)))
    try:
        if threshold <= 0:
            raise NoMonotoneSegmentError("flat reconstructed trace")
        seg = find_monotone_segment(profile, threshold)
        # empty recovery interval when the noise swamps the oscillation
        trim = trim_factor * discrepancy
        rec = extract_f(profile, seg, trim=trim)
    except (NoMonotoneSegmentError, EmptyIntervalError) as exc:
        print(f"reconstruct: {exc}", file=sys.stderr)
        return None
    write_csv(out / "frec.csv", ["u", "f"],
              list(zip(rec.u_knots, rec.f_knots)))
    _write_report(out / "segreport.txt", [
        ("t_a", seg.t_a),
        ("t_b", seg.t_b),
        ("sign", seg.sign),
        ("min_slope", seg.min_slope),
        ("V_lo", rec.interval[0]),
        ("V_hi", rec.interval[1]),
        ("trim", rec.trim),
    ])
    _say(quiet, f"reconstruct: V = [{rec.interval[0]:.6g}, "
                f"{rec.interval[1]:.6g}], trim {rec.trim:.3g}")
    return rec


def _cmd_forward(settings, out, quiet):
    solved = _solve_stage(settings, quiet)
    if solved is None:
        return EXIT_FORWARD
    mesh, u, report = solved
    data = extract_cauchy_data(u, mesh, noise_eps=settings.noise_eps,
                               seed=settings.noise_seed,
                               m=settings.gamma2_samples)
    _write_forward_outputs(out, mesh, u, report, data, settings)
    return EXIT_OK


def _cmd_continue(settings, out, quiet):
    from corrinv.experiments import continue_data

    mesh = build_rectangle_mesh(settings.domain, settings.mesh_n)
    data = _load_cauchy(out, mesh, settings)
    profile, result, mu, under = continue_data(
        mesh, settings.experiment_config(), data)
    _write_continue_outputs(out, profile, result, mu, under)
    _say(quiet, f"continue: mu = {mu:.3e}, discrepancy = "
                f"{result.discrepancy:.3e}")
    if under:
        print("continue: under-resolved at the requested noise level",
              file=sys.stderr)
        return EXIT_UNDERRESOLVED
    return EXIT_OK


def _cmd_reconstruct(settings, out, quiet):
    table = read_csv(out / "gamma1_rec.csv")
    profile = BoundaryProfile(t=table.column("t"), v=table.column("u"),
                              w=table.column("dnu"),
                              dv=table.column("du_dt"))
    discrepancy = 0.0
    fitreport = out / "fitreport.txt"
    if fitreport.exists():
        discrepancy = float(_read_report(fitreport).get("discrepancy", 0.0))
    rec = _reconstruct_stage(out, profile, settings.eta_factor,
                             settings.trim_factor, discrepancy, quiet)
    return EXIT_OK if rec is not None else EXIT_NO_SEGMENT


def _cmd_pipeline(settings, out, quiet):
    from corrinv.experiments import (
        continue_data,
        overlap_and_error,
        truth_on_interval,
    )

    solved = _solve_stage(settings, quiet)
    if solved is None:
        return EXIT_FORWARD
    mesh, u, report = solved
    data = extract_cauchy_data(u, mesh, noise_eps=settings.noise_eps,
                               seed=settings.noise_seed,
                               m=settings.gamma2_samples)
    _write_forward_outputs(out, mesh, u, report, data, settings)
    profile, result, mu, under = continue_data(
        mesh, settings.experiment_config(), data)
    _write_continue_outputs(out, profile, result, mu, under)
    if under:
        print("pipeline: continuation under-resolved", file=sys.stderr)
        return EXIT_UNDERRESOLVED
    rec = _reconstruct_stage(out, profile, settings.eta_factor,
                             settings.trim_factor, result.discrepancy, quiet)
    if rec is None:
        return EXIT_NO_SEGMENT
    truth = truth_on_interval(settings.model, rec.interval)
    interval, err = overlap_and_error(rec, truth)
    _write_report(out / "summary.txt", [
        ("model", settings.model_kind),
        ("noise_eps", settings.noise_eps),
        ("seed", settings.noise_seed),
        ("mu", mu),
        ("V_lo", interval[0]),
        ("V_hi", interval[1]),
        ("sup_error", err),
    ])
    _say(quiet, f"pipeline: sup error {err:.3e} on "
                f"V = [{interval[0]:.6g}, {interval[1]:.6g}]")
    return EXIT_OK


def _cmd_sweep(settings, out, quiet):
    from corrinv.experiments import run_noise_sweep, run_oscillation_sweep

    cfg = settings.experiment_config()
    stability = run_noise_sweep(cfg)
    write_csv(out / "stability.csv", ["eps", "median_err", "iqr", "fails"],
              [(e, m, q, f) for e, m, q, f in stability.records])
    osc = run_oscillation_sweep(cfg, settings.oscillation_magnitudes)
    write_csv(out / "oscillation.csv", ["m", "gsup", "osc"],
              [(m, gs, o) for m, gs, o in osc.records])
    plot_lines = ["# block 0: eps median_err", ]
    for e, m, _, _ in stability.records:
        plot_lines.append(f"{format_number(e)} {format_number(m)}")
    plot_lines += ["", "", "# block 1: m osc"]
    for m, _, o in osc.records:
        plot_lines.append(f"{format_number(m)} {format_number(o)}")
    (out / "sweep_plot.dat").write_text("\n".join(plot_lines) + "\n")
    _write_report(out / "sweep_summary.txt", [
        ("stability_C", stability.c_fit),
        ("stability_theta", stability.theta_fit),
        ("stability_fit_residual", stability.fit_residual),
        ("stability_eps0", stability.eps0),
        ("oscillation_c", osc.c_fit),
        ("oscillation_gamma", osc.gamma_fit),
        ("oscillation_fit_residual", osc.fit_residual),
        ("oscillation_truncated_at",
         "none" if osc.truncated_at is None
         else format_number(osc.truncated_at)),
    ])
    _say(quiet, f"sweep: theta = {stability.theta_fit:.3f}, "
                f"gamma = {osc.gamma_fit:.3f}")
    return EXIT_OK


def _cmd_check(settings, out, quiet):
    from corrinv.experiments import three_spheres_check

    cfg = settings.experiment_config()
    taus = three_spheres_check(cfg.make_basis(), settings.check_trials,
                               settings.check_rho0, settings.check_center,
                               domain=settings.domain,
                               seed=settings.check_seed)
    write_csv(out / "threespheres.csv", ["trial", "tau"],
              [(i, taus[i]) for i in range(taus.size)])
    _write_report(out / "check_summary.txt", [
        ("trials", taus.size),
        ("rho0", settings.check_rho0),
        ("tau_min", float(taus.min())),
        ("tau_max", float(taus.max())),
        ("tau_mean", float(taus.mean())),
        ("all_positive", str(bool((taus > 0).all())).lower()),
    ])
    _say(quiet, f"check: tau in [{taus.min():.4f}, {taus.max():.4f}] "
                f"over {taus.size} trials")
    return EXIT_OK


_COMMANDS = {
    "forward": _cmd_forward,
    "continue": _cmd_continue,
    "reconstruct": _cmd_reconstruct,
    "sweep": _cmd_sweep,
    "check": _cmd_check,
    "pipeline": _cmd_pipeline,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="corrinv",
        description="Inverse corrosion detection from electrostatic "
                    "boundary measurements.")
    parser.add_argument("subcommand", choices=sorted(_COMMANDS))
    parser.add_argument("--config", metavar="PATH",
                        help="configuration file (defaults apply if omitted)")
    parser.add_argument("--out", metavar="DIR", default=".",
                        help="output directory (created if missing)")
    parser.add_argument("--seed", metavar="N", type=int,
                        help="override noise.seed from the config")
    parser.add_argument("--quiet", action="store_true",
                        help="suppress progress output")
    args = parser.parse_args(argv)
    try:
        if args.config is not None:
            settings = parse_config(path=args.config)
        else:
            settings = parse_config(text="")
    except FileNotFoundError as exc:
        print(f"config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        if args.seed < 0:
            print("config: --seed must be nonnegative", file=sys.stderr)
            return EXIT_CONFIG
        from dataclasses import replace

        settings = replace(settings, noise_seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        return _COMMANDS[args.subcommand](settings, out, args.quiet)
    except ConfigError as exc:
        print(f"{args.subcommand}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
