"""Command-line entry point.

Value precedence for experiment parameters: command-line flags, then the
``--config`` file, then ``$PHASELAB_SEED`` (seed only), then built-in
defaults.  Exit codes: 0 success, 1 usage error, 2 configuration error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys

import numpy as np

from . import __version__
from . import harness, metrics, theory
from .model import (ConfigError, ExperimentConfig, SamplingMode, open_output, read_counts_csv,
                    simulate_counts, write_counts_csv)

log = logging.getLogger("phaselab")

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

_FORMULA_ALIASES = {
    "nfm": theory.FormulaId.NFM_ASYM,
    "mlu": theory.FormulaId.ML_UNCONSTR_ASYM,
    "ml": theory.FormulaId.ML_CONSTR_ASYM,
    "crlb": theory.FormulaId.CRLB_ASYM,
    "fisher": theory.FormulaId.FISHER_EXACT,
    "ml1": theory.FormulaId.SINGLE_PARAM_ASYM,
}
_FORMULA_CHOICES = sorted(set(_FORMULA_ALIASES) | {f.value for f in theory.FormulaId})


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _grid_arg(text):
    try:
        return harness.parse_grid(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _number_arg(text):
    try:
        return harness.parse_number(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _int_arg(text):
    try:
        return int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None


def _add_experiment_flags(p):
    g = p.add_argument_group("experiment parameters (override --config)")
    g.add_argument("--config", metavar="PATH", help="key = value configuration file")
    g.add_argument("--intensity", type=_number_arg, help="mean photon number N per quadrature pair")
    g.add_argument("--visibility", type=_number_arg, help="fringe visibility V in [0, 1]")
    g.add_argument("--true-phase", type=_number_arg, help="true phase in radians (may use pi)")
    g.add_argument("--frames", type=_int_arg, help="number of frames")
    g.add_argument("--seed", type=_int_arg, help="master seed (fallback: $PHASELAB_SEED, then 0)")
    g.add_argument("--jitter-sigma", type=_number_arg, help="std. dev. of per-frame phase jitter")
    g.add_argument("--sampling-mode", choices=[m.value for m in SamplingMode])
    g.add_argument("--pulses-per-frame", type=_int_arg, help="weak pulses per frame")
    p.add_argument("--workers", type=_int_arg, default=None,
                   help="worker threads (default: all cores); never changes results")


def _add_stat_flags(p):
    p.add_argument("--replicates", type=_int_arg, default=metrics.DEFAULT_REPLICATES,
                   help="bootstrap replicates (default %(default)s)")
    p.add_argument("--level", type=float, default=metrics.DEFAULT_LEVEL,
                   help="confidence level of intervals (default %(default)s)")


def _add_out(p, what="results CSV"):
    p.add_argument("--out", metavar="PATH", help=f"{what} (default: standard output)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="phaselab", description="Monte Carlo lab for interferometric phase estimation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to standard error")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("simulate", help="simulate photocount frames")
    _add_experiment_flags(p)
    _add_out(p, "counts CSV")

    p = sub.add_parser("estimate", help="estimate the phase of every frame in a counts CSV")
    p.add_argument("--in", dest="input", required=True, metavar="PATH", help="counts CSV")
    p.add_argument("--method", choices=sorted(harness.ESTIMATORS), default="nfm",
                   help="nfm, ml (constrained), mlu (unconstrained) or ml1 (V = 1 assumed)")
    _add_out(p, "estimates CSV")

    p = sub.add_parser("sweep-intensity", help="dispersion against mean photon number")
    _add_experiment_flags(p)
    p.add_argument("--grid", type=_grid_arg, help="intensities: 'a,b,c', 'lin:a:b:n' or 'log:a:b:n'")
    p.add_argument("--estimators", default="nfm,ml,mlu", help="comma-separated estimator tags")
    p.add_argument("--fixed-frames", action="store_true",
                   help="use --frames at every point instead of scaling with 1/N")
    _add_stat_flags(p)
    _add_out(p)

    p = sub.add_parser("efficiency", help="hit-frequency difference against window width")
    _add_experiment_flags(p)
    p.add_argument("--grid", type=_grid_arg, help="full window widths in radians")
    _add_stat_flags(p)
    _add_out(p)

    p = sub.add_parser("sweep-phase", help="dispersion against true phase with theory columns")
    _add_experiment_flags(p)
    p.add_argument("--grid", type=_grid_arg, help="true phases in radians")
    p.add_argument("--estimators", default="nfm,mlu,ml", help="comma-separated estimator tags")
    p.add_argument("--reference", help="add paired differences from this estimator tag")
    _add_stat_flags(p)
    _add_out(p)

    p = sub.add_parser("bias", help="bias of an estimator assuming the wrong visibility")
    _add_experiment_flags(p)
    p.add_argument("--visibility-grid", type=_grid_arg, help="actual visibilities")
    p.add_argument("--phase-grid", type=_grid_arg, help="true phases in radians")
    p.add_argument("--assume", choices=("one", "estimated"), default="one",
                   help="'one': single-parameter estimator with V = 1; 'estimated': constrained ML")
    _add_stat_flags(p)
    _add_out(p)

    p = sub.add_parser("theory", help="evaluate a closed-form formula")
    p.add_argument("--formula", required=True, choices=_FORMULA_CHOICES)
    p.add_argument("--intensity", type=_number_arg, required=True)
    p.add_argument("--visibility", type=_number_arg, default=1.0)
    p.add_argument("--phase", type=_number_arg, default=0.0)
    p.add_argument("--integrated", action="store_true",
                   help="integrate the formula over a full period of phase (V = 1)")
    p.add_argument("--csv", action="store_true", help="print a CSV row instead of the bare value")

    p = sub.add_parser("calibrate", help="infer phase-jitter amplitude from a phase-sweep CSV")
    p.add_argument("--in", dest="input", required=True, metavar="PATH", help="phase-sweep CSV")
    p.add_argument("--estimator", default="nfm", choices=("nfm", "mlu", "ml"))
    p.add_argument("--baseline", metavar="PATH", help="zero-jitter phase-sweep CSV used as reference")
    p.add_argument("--replicates", type=_int_arg, default=metrics.DEFAULT_REPLICATES)
    p.add_argument("--seed", type=_int_arg, default=None, help="bootstrap seed (fallback: $PHASELAB_SEED, then 0)")
    return parser


# ---------------------------------------------------------------------------


_FLAG_FIELDS = ("intensity", "visibility", "true_phase", "frames", "seed",
                "jitter_sigma", "sampling_mode", "pulses_per_frame")


def _resolve(args, defaults=None):
    """Merge flags over the config file over defaults; return (config, grids)."""
    values, grids = {}, {}
    if args.config:
        try:
            cfg, grids = harness.load_config(args.config)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        values = dict(cfg.__dict__)
    for name in _FLAG_FIELDS:
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = flag
    for key, value in (defaults or {}).items():
        values.setdefault(key, value)
    if "seed" not in values:
        values["seed"] = harness.seed_from_env()
    missing = [k for k in harness.REQUIRED_KEYS if k not in values]
    if missing:
        flags = ", ".join("--" + k.replace("_", "-") for k in missing)
        raise ConfigError(f"missing required parameter(s): {flags}")
    return ExperimentConfig(**values), grids


def _tags(text):
    tags = [t.strip() for t in text.split(",") if t.strip()]
    unknown = [t for t in tags if t not in harness.ESTIMATORS]
    if not tags or unknown:
        raise ConfigError(f"bad estimator list {text!r}; choose from {sorted(harness.ESTIMATORS)}")
    return tags


def _emit(result, out):
    harness.write_results(result, out if out else sys.stdout)


def _cmd_simulate(args):
    config, _ = _resolve(args)
    counts = simulate_counts(config, workers=args.workers)
    write_counts_csv(counts, args.out if args.out else sys.stdout)


def _cmd_estimate(args):
    try:
        counts = read_counts_csv(args.input)
    except OSError as exc:
        raise ConfigError(f"cannot read counts: {exc}") from None
    result = harness.ESTIMATORS[args.method](counts)
    with open_output(args.out if args.out else sys.stdout) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["frame", "method", "theta", "visibility", "valid", "boundary"])
        for i in range(len(counts)):
            vis = result.visibility[i]
            writer.writerow([
                i,
                args.method,
                "%.17g" % result.theta[i],
                "" if not np.isfinite(vis) else "%.17g" % vis,
                int(result.valid[i]),
                int(result.on_boundary[i]),
            ])
    if not result.valid.any():
        raise metrics.MetricsError("no frame produced a valid estimate")


def _cmd_sweep_intensity(args):
    config, grids = _resolve(args, {"intensity": 1.0})
    grid = args.grid or grids.get("grid_intensity")
    result = harness.run_intensity_sweep(
        config, grid, estimators=_tags(args.estimators), scale_frames=not args.fixed_frames,
        replicates=args.replicates, level=args.level, workers=args.workers,
    )
    _emit(result, args.out)


def _cmd_efficiency(args):
    config, grids = _resolve(args)
    grid = args.grid or grids.get("grid_window")
    result = harness.run_window_sweep(config, grid, replicates=args.replicates, level=args.level,
                                      workers=args.workers)
    _emit(result, args.out)


def _cmd_sweep_phase(args):
    config, grids = _resolve(args, {"true_phase": 0.0})
    grid = args.grid or grids.get("grid_phase")
    result = harness.run_phase_sweep(config, grid, estimators=_tags(args.estimators),
                                     replicates=args.replicates, level=args.level, workers=args.workers,
                                     reference=args.reference)
    _emit(result, args.out)


def _cmd_bias(args):
    config, grids = _resolve(args, {"true_phase": 0.0, "visibility": 1.0})
    vis = args.visibility_grid or grids.get("grid_visibility") or [config.visibility]
    phases = args.phase_grid or grids.get("grid_phase") or [config.true_phase]
    result = harness.run_bias_sweep(config, vis, phases, expected_v_one=args.assume == "one",
                                    replicates=args.replicates, level=args.level, workers=args.workers)
    _emit(result, args.out)


def _cmd_theory(args):
    formula = _FORMULA_ALIASES.get(args.formula) or theory.FormulaId(args.formula)
    try:
        if args.integrated:
            value = theory.integrated_cost(formula, args.intensity)
        else:
            value = theory.evaluate(formula, args.intensity, args.visibility, args.phase)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if args.csv:
        writer = csv.writer(sys.stdout, lineterminator="\n")
        writer.writerow(["formula", "intensity", "visibility", "phase", "value"])
        phase = "" if args.integrated else repr(args.phase)
        writer.writerow([formula.value, repr(args.intensity), repr(args.visibility), phase, repr(value)])
    else:
        print(repr(value))


def _cmd_calibrate(args):
    try:
        observed = harness.read_results(args.input, harness.Scenario.PHASE_SWEEP)
        baseline = harness.read_results(args.baseline, harness.Scenario.PHASE_SWEEP) if args.baseline else None
    except OSError as exc:
        raise ConfigError(f"cannot read results: {exc}") from None
    seed = args.seed if args.seed is not None else harness.seed_from_env()
    cal = harness.calibrate_jitter(observed, args.estimator, baseline, replicates=args.replicates, seed=seed)
    if cal.warning:
        print("warning: observed dispersion is below the reference; jitter set to 0", file=sys.stderr)
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["sigma", "uncertainty"])
    writer.writerow([repr(cal.sigma), repr(cal.uncertainty)])


_COMMANDS = {
    "simulate": _cmd_simulate,
    "estimate": _cmd_estimate,
    "sweep-intensity": _cmd_sweep_intensity,
    "efficiency": _cmd_efficiency,
    "sweep-phase": _cmd_sweep_phase,
    "bias": _cmd_bias,
    "theory": _cmd_theory,
    "calibrate": _cmd_calibrate,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if getattr(args, "workers", None) is None and hasattr(args, "workers"):
        args.workers = os.cpu_count() or 1
    try:
        _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except metrics.MetricsError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BrokenPipeError:
        # reader went away (e.g. piped into head); not an error of ours
        devnull = os.open(os.devnull, os.O_WRONLY)
        os.dup2(devnull, sys.stdout.fileno())
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
