"""Command line entry point: ``cavityorder {run,scan,spectrum,validate}``.

Exit codes
----------
0  success
1  usage, configuration or output-directory error; failed validation
2  physicality abort (populations or photon numbers left their bounds)
3  integration failure (step size underflow or step budget exhausted)
4  non-stationary correlation span, only with ``spectrum --strict``
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .cumulants import PhysicalityError
from .integrator import IntegrationError, IntegratorSettings
from .output import OutputExistsError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PHYSICALITY = 2
EXIT_INTEGRATION = 3
EXIT_NONSTATIONARY = 4

HELP_WIDTH = 80

log = logging.getLogger("cavityorder")


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with 1 so that 2 stays reserved for physicality aborts."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _formatter(prog):
    return argparse.ArgumentDefaultsHelpFormatter(prog, width=HELP_WIDTH, max_help_position=30)


def _common(sp, default_out):
    sp.add_argument("config", help="TOML parameter file")
    sp.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                    help="override one parameter; repeatable, the last occurrence wins")
    sp.add_argument("-o", "--output", default=default_out, help="output directory")
    sp.add_argument("--force", action="store_true", help="overwrite existing output files")
    sp.add_argument("-v", "--verbose", action="count", default=0, help="more log output")
    sp.add_argument("-q", "--quiet", action="store_true", help="only report errors")
    g = sp.add_argument_group("integrator")
    g.add_argument("--rtol", type=float, default=1e-6, help="relative tolerance")
    g.add_argument("--atol", type=float, default=1e-8, help="absolute tolerance")
    g.add_argument("--max-step", type=float, default=1.0, help="largest step [1/gamma]")
    g.add_argument("--sample-dt", type=float, default=0.1, help="output sampling interval")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cavityorder", formatter_class=_formatter,
                     description="Cumulant simulations of transversely driven atoms in a cavity.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", formatter_class=_formatter, help="integrate one trajectory",
                         description="Integrate one trajectory and write its time series.")
    _common(run, "run_out")
    run.add_argument("--engine", choices=("second_order", "mean_field"), default="second_order",
                     help="closure order of the moment equations")
    run.add_argument("--frozen-motion", action="store_true", help="pin the atoms in place")
    run.add_argument("--plot", action="store_true", help="also write PNG figures")

    scan = sub.add_parser("scan", formatter_class=_formatter, help="two-parameter sweep",
                          description="Sweep two parameters and time-average every cell.")
    _common(scan, "scan_out")
    scan.add_argument("--axis1", required=True, metavar="NAME:LO:HI:COUNT",
                      help="first axis; NAME is delta_c, omega_pump or g")
    scan.add_argument("--axis2", required=True, metavar="NAME:LO:HI:COUNT", help="second axis")
    scan.add_argument("--engine", choices=("mean_field", "second_order"), default="mean_field",
                      help="closure order used in every cell")
    scan.add_argument("--seed-policy", choices=("cell-indexed", "fixed"), default="cell-indexed",
                      help="cell-indexed adds the cell index to the config seed")
    scan.add_argument("--repetitions", type=int, default=1, help="trajectories per cell")
    scan.add_argument("--workers", type=int, default=None,
                      help="worker processes; None means $CAVITYORDER_WORKERS or the CPU count")
    scan.add_argument("--plot", action="store_true", help="also write PNG heat maps")

    spec = sub.add_parser("spectrum", formatter_class=_formatter, help="cavity output spectrum",
                          description="Run to t0, propagate g1(tau) and transform it.")
    _common(spec, "spectrum_out")
    spec.add_argument("--mode", choices=("main", "filter"), default="main",
                      help="cavity mode whose output is analysed")
    spec.add_argument("--t0", type=float, default=None, help="start of the correlation; None means t_final")
    spec.add_argument("--span", type=float, default=200.0, help="correlation length T")
    spec.add_argument("--dtau", type=float, default=0.02, help="tau sampling step")
    spec.add_argument("--repeats", type=int, default=1, help="average g1 over this many start times")
    spec.add_argument("--spacing", type=float, default=None, help="distance between start times; None means span")
    spec.add_argument("--apodization", type=float, default=None,
                      help="exponential window decay time; broadens lines by 2/value")
    spec.add_argument("--incoherent", action="store_true",
                      help="subtract the coherent part <c+><c> from g1")
    spec.add_argument("--peak-prominence", type=float, default=0.01, help="relative peak prominence")
    spec.add_argument("--dip-prominence", type=float, default=0.01, help="relative dip prominence")
    spec.add_argument("--window", type=float, nargs=2, default=None, metavar=("LO", "HI"),
                      help="restrict feature search to this frequency range")
    spec.add_argument("--strict", action="store_true", help="exit 4 when g1 is not stationary")
    spec.add_argument("--plot", action="store_true", help="also write a PNG of the spectrum")

    val = sub.add_parser("validate", formatter_class=_formatter,
                         help="compare with the exact master equation",
                         description="Compare cumulant dynamics of pinned atoms with the exact "
                                     "master equation (at most 3 atoms).")
    _common(val, "validate_out")
    val.add_argument("--engine", choices=("second_order", "mean_field"), default="second_order",
                     help="closure order under test")
    val.add_argument("--t-final", type=float, default=5.0, help="end of the comparison window")
    val.add_argument("--dt", type=float, default=0.05, help="comparison grid step")
    val.add_argument("--cutoff", type=int, default=10, help="Fock cutoff per mode")
    val.add_argument("--tol", type=float, default=0.05, help="relative tolerance")
    val.add_argument("--floor", type=float, default=1e-4, help="absolute denominator floor")
    val.add_argument("--antinodes", action="store_true",
                     help="pin every atom at x = y = 0 instead of the seeded positions")
    return parser


def _setup_logging(args):
    level = logging.ERROR if args.quiet else (logging.INFO if args.verbose == 0 else logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s: %(message)s", stream=sys.stderr,
                        force=True)


def _settings(args, sample_dt=None):
    return IntegratorSettings(rel_tol=args.rtol, abs_tol=args.atol, max_step=args.max_step,
                              sample_dt=args.sample_dt if sample_dt is None else sample_dt)


def _load_params(args):
    from .params import apply_overrides, load_config_file

    path = Path(args.config)
    if not path.is_file():
        raise FileNotFoundError(f"config file {path} not found")
    return apply_overrides(load_config_file(path), args.overrides)


def _args_record(args):
    return {k: v for k, v in sorted(vars(args).items())}


def _write_common(out, command, p, settings, args, **extra):
    from .output import metadata, write_json
    from .params import dump_config

    (out / "config.toml").write_text(dump_config(p))
    write_json(out / "metadata.json", metadata(command, p, settings, _args_record(args), **extra))


def cmd_run(args) -> int:
    from .observables import time_average
    from .output import prepare_output_dir, write_trajectory_csv
    from .simulation import run_trajectory

    p = _load_params(args)
    settings = _settings(args)
    if args.engine == "mean_field" and p.two_mode:
        raise ValueError("the mean-field engine has no filter mode; remove delta_c2")
    names = ["trajectory.csv", "metadata.json", "config.toml"] + (["trajectory.png"] if args.plot else [])
    out = prepare_output_dir(args.output, args.force, names)
    log.info("integrating %d atoms to t=%g with the %s engine", p.n_atoms, p.t_final, args.engine)
    model, tr = run_trajectory(p, engine=args.engine, settings=settings,
                               frozen_motion=args.frozen_motion)
    write_trajectory_csv(out / "trajectory.csv", model, tr)
    window = min(p.avg_window, p.t_final)
    avg = time_average(tr, window)
    final = {k: float(np.asarray(v)[-1]) for k, v in tr.observables.items()}
    summary = {"final": final, "window_average": avg.to_dict(), "window": window,
               "flagged_samples": int(np.count_nonzero(tr.flagged)), "stats": tr.stats}
    _write_common(out, "run", p, settings, args, summary=summary)
    if args.plot:
        from .plotting import plot_trajectory

        plot_trajectory(out / "trajectory.png", tr.times, tr.observables)
    print(f"final |theta| = {final['abs_theta']:.4f}  n_phot = {final['n_phot']:.6g}  "
          f"e_kin = {final['e_kin']:.4f}")
    print(f"last {window:g}/gamma: |theta| = {avg.abs_theta:.4f}  n_phot = {avg.n_phot:.6g}  "
          f"e_kin = {avg.e_kin:.4f}  inversion = {avg.inversion:.4f}")
    return EXIT_OK


def cmd_scan(args) -> int:
    from .output import prepare_output_dir, write_scan_csv
    from .scan import Axis, ScanSpec, run_scan

    p = _load_params(args)
    settings = _settings(args)
    spec = ScanSpec(Axis.parse(args.axis1), Axis.parse(args.axis2), p, engine=args.engine,
                    seed_policy=args.seed_policy, repetitions=args.repetitions, settings=settings)
    if spec.engine == "mean_field" and p.two_mode:
        raise ValueError("the mean-field engine has no filter mode; remove delta_c2")
    names = ["scan.csv", "metadata.json", "config.toml"] + (["scan.png"] if args.plot else [])
    out = prepare_output_dir(args.output, args.force, names)

    def progress(done, total):
        log.debug("cell %d/%d done", done, total)

    grid = run_scan(spec, workers=args.workers, progress=progress)
    write_scan_csv(out / "scan.csv", grid)
    failed = {f"{c.i},{c.j}": c.status for c in grid.failed()}
    _write_common(out, "scan", p, settings, args, scan=spec.to_dict(), failed_cells=failed)
    if args.plot:
        from .plotting import plot_scan

        plot_scan(out / "scan.png", grid)
    n = spec.shape[0] * spec.shape[1]
    print(f"{n - len(failed)}/{n} cells ok; max |theta| = {np.nanmax(grid.field('abs_theta')):.4f}")
    for key, status in failed.items():
        print(f"cell {key} failed: {status}", file=sys.stderr)
    return EXIT_OK


def cmd_spectrum(args) -> int:
    from .output import prepare_output_dir, write_correlation_csv, write_json, write_spectrum_csv
    from .spectrum import NonStationaryWarning, spectrum_pipeline

    p = _load_params(args)
    settings = _settings(args)
    if args.mode == "filter" and not p.two_mode:
        raise ValueError("the filter-mode spectrum needs delta_c2 in the config")
    names = ["spectrum.csv", "correlation.csv", "features.json", "metadata.json", "config.toml"]
    names += ["spectrum.png"] if args.plot else []
    out = prepare_output_dir(args.output, args.force, names)
    window = tuple(args.window) if args.window else None
    kwargs = {"peak_prominence": args.peak_prominence, "dip_prominence": args.dip_prominence,
              "window": window, "relative_to": "window" if window else "max"}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonStationaryWarning)
        res = spectrum_pipeline(p, t0=args.t0, span=args.span, dtau=args.dtau, mode_tag=args.mode,
                                settings=settings, repeats=args.repeats, spacing=args.spacing,
                                apodization=args.apodization, feature_kwargs=kwargs,
                                subtract_coherent=args.incoherent)
    write_spectrum_csv(out / "spectrum.csv", res.spectrum)
    write_correlation_csv(out / "correlation.csv", res.correlation)
    report = {"mode": args.mode, "t0": res.t0, "resolution": res.spectrum.resolution,
              "g1_0": [res.correlation.g1[0].real, res.correlation.g1[0].imag],
              "warnings": res.correlation.warnings,
              "features": [f.to_dict() for f in res.features]}
    write_json(out / "features.json", report)
    _write_common(out, "spectrum", p, settings, args)
    if args.plot:
        from .plotting import plot_spectrum

        plot_spectrum(out / "spectrum.png", res.spectrum, res.features, xlim=window)
    peaks = [f for f in res.features if f.kind == "peak"]
    dips = [f for f in res.features if f.kind == "dip"]
    print(f"{len(peaks)} peaks, {len(dips)} dips; resolution {res.spectrum.resolution:.4g}")
    for f in res.features:
        print(f"  {f.kind:4s} at {f.position:+.3f}  width {f.width:.3f}  prominence {f.prominence:.3g}")
    for w in res.correlation.warnings:
        print(f"warning: {w}", file=sys.stderr)
    if args.strict and res.correlation.warnings:
        return EXIT_NONSTATIONARY
    return EXIT_OK


def cmd_validate(args) -> int:
    from .cumulants import make_model
    from .integrator import integrate
    from .oracle import HilbertSpec, compare_to_cumulant, cumulant_series, evolve_expectations
    from .output import prepare_output_dir, write_json
    from .params import PositionsSnapshot

    p = _load_params(args)
    if args.engine == "mean_field" and p.two_mode:
        raise ValueError("the mean-field engine has no filter mode; remove delta_c2")
    settings = _settings(args, sample_dt=args.dt)
    out = prepare_output_dir(args.output, args.force, ["report.json", "metadata.json", "config.toml"])
    if args.antinodes:
        p = p.replace(init_pos_halfwidth=0.0)
    p = p.replace(init_mom_halfwidth=0.0, t_final=args.t_final)
    model = make_model(p, args.engine, frozen_motion=True)
    y0 = model.initial_vector()
    x, y = model.positions(y0)
    h = HilbertSpec(p.n_atoms, PositionsSnapshot(x, y), fock_cutoff=args.cutoff,
                    modes=2 if p.two_mode else 1)
    n_steps = int(round(args.t_final / args.dt))
    grid = args.dt * np.arange(n_steps + 1)
    oracle = evolve_expectations(p, h, grid)
    tr = integrate(model.rhs, y0, grid[-1], settings)
    series = cumulant_series(model, tr.samples)
    tol = {"n_phot": (args.tol, args.floor), "pop": (args.tol, args.floor)}
    if p.two_mode:
        tol["n_phot_b"] = (args.tol, args.floor)
    report = compare_to_cumulant(oracle, series, tol, times=tr.times)
    payload = report.to_dict()
    payload.update({"engine": args.engine, "fock_cutoff": args.cutoff,
                    "positions": {"x": x, "y": y}, "t_final": float(grid[-1])})
    write_json(out / "report.json", payload)
    _write_common(out, "validate", p, settings, args)
    print(json.dumps(json.loads((out / "report.json").read_text()), indent=2, sort_keys=True))
    return EXIT_OK if report.ok else EXIT_USAGE


COMMANDS = {"run": cmd_run, "scan": cmd_scan, "spectrum": cmd_spectrum, "validate": cmd_validate}


def main(argv=None) -> int:
    from .oracle import CutoffNotConverged
    from .params import ConfigError

    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging(args)
    try:
        return COMMANDS[args.command](args)
    except PhysicalityError as exc:
        log.error("physicality abort: %s", exc)
        return EXIT_PHYSICALITY
    except IntegrationError as exc:
        log.error("integration failed: %s", exc)
        return EXIT_INTEGRATION
    except (FileNotFoundError, OutputExistsError, ConfigError, ValueError,
            CutoffNotConverged) as exc:
        log.error("%s", exc)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
