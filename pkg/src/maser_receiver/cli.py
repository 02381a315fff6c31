"""Command-line entry point: ``maser-receiver <command> [options]``.

Exit status: 0 success, 1 invalid configuration, 2 runtime or numerical
failure, 64 usage error (unknown command or flag).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import scenarios as sc
from .analysis import detector_chain
from .calibration import dbm_to_watt
from .configfile import apply_overrides, config_to_text, load_config, parse_config, seeded
from .errors import ConfigError, DomainError, ReceiverError
from .lindblad import evolve_with_adaptive_cutoff, polarized_state
from .meanfield import integrate_meanfield
from .model import TWO_PI, derived_quantities, validate_config
from .outputs import emit_outputs, lindblad_table, trace_table

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_RUNTIME = 2
EXIT_USAGE = 64
THREADS_ENV = "RECEIVER_SIM_THREADS"

COMMANDS = (
    "validate",
    "simulate",
    "oracle",
    "calibrate",
    "sensitivity",
    "gain-sweep",
    "heterodyne",
    "compare-oracle",
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="config file (default: built-in receiver defaults; "
                        "a small resonant test system for oracle commands)")
    common.add_argument("--output", default="out", help="output directory (default: out)")
    common.add_argument("--override", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="replace one config value; repeatable")
    common.add_argument("--seed", type=int, help="seed for every stochastic component")
    common.add_argument("--threads", type=int, help=f"worker threads (fallback: ${THREADS_ENV})")

    p = _Parser(prog="maser-receiver", description="Maser receiver simulator")
    sub = p.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    sub.add_parser("validate", parents=[common], help="check a config and print derived quantities")
    sub.add_parser("simulate", parents=[common], help="one mean-field run; writes the trace")

    o = sub.add_parser("oracle", parents=[common], help="master-equation run for a few spins")
    o.add_argument("--dim-fock", type=int, default=4, help="initial Fock cutoff (doubled as needed)")

    c = sub.add_parser("calibrate", parents=[common], help="Rabi nutation calibration of C")
    c.add_argument("--powers-dbm", type=_floats, help="comma-separated input powers in dBm")
    c.add_argument("--as-is", action="store_true",
                   help="use the config unchanged instead of the nutation setup derived from it")

    s = sub.add_parser("sensitivity", parents=[common], help="minimum detectable field")
    s.add_argument("--b-test", type=float, default=2.47, help="test field in nT")
    s.add_argument("--delta-f", type=float, default=sc.DEFAULT_DELTA_F, help="bandwidth in Hz")

    g = sub.add_parser("gain-sweep", parents=[common], help="response S(B1) and gain profile")
    g.add_argument("--b1", type=_floats, help="comma-separated B1 values in nT")
    g.add_argument("--gain-b1", type=float, default=sc.DEFAULT_GAIN_B1_NT, help="B1 for the gain profile, nT")
    g.add_argument("--span-mhz", type=float, default=10.0)
    g.add_argument("--step-mhz", type=float, default=1.0)

    h = sub.add_parser("heterodyne", parents=[common], help="beat frequency and epsilon sweep")
    h.add_argument("--max-mhz", type=float, default=4.0)
    h.add_argument("--step-khz", type=float, default=100.0)
    h.add_argument("--scale", choices=("amplitude", "power"), default="amplitude",
                   help="epsilon in 20*log10 (amplitude) or 10*log10 (power)")

    k = sub.add_parser("compare-oracle", parents=[common], help="mean-field against the master equation")
    k.add_argument("--window", type=float, help="comparison window in s (default: first vacuum-Rabi period)")
    k.add_argument("--dim-fock", type=int, default=4)
    return p


def _threads(args):
    if args.threads is not None:
        n = args.threads
    else:
        env = os.environ.get(THREADS_ENV, "").strip()
        n = int(env) if env.isdigit() else 1
    return max(1, n)


def _effective_config(args):
    if args.config:
        config = load_config(args.config)
    elif args.command in ("oracle", "compare-oracle"):
        # the receiver defaults are far outside the few-spin regime
        config = sc.oracle_config()
    else:
        config = load_config()
    config = seeded(apply_overrides(config, args.override), args.seed)
    # one trip through the text form makes the run reproducible from its echo
    return validate_config(parse_config(config_to_text(config)))


def _print_summary(name, manifest_dir, summary):
    print(f"{name}: wrote {manifest_dir}")
    for key, val in summary.items():
        print(f"  {key} = {val}")


def _emit(result, args):
    manifest = emit_outputs(result, args.output)
    _print_summary(result.name, os.path.join(args.output, result.name), result.summary)
    for w in result.warnings:
        print(f"  warning: {w}", file=sys.stderr)
    return manifest


def _cmd_validate(config, args):
    print(json.dumps(derived_quantities(config), indent=2))


def _cmd_simulate(config, args):
    trace = integrate_meanfield(config)
    det = detector_chain(trace, config)
    tables = {
        "trace": trace_table(trace),
        "detector": {"t_s": det.t, "power_W": det.power, "voltage_raw_mV": det.voltage_raw, "voltage_mV": det.voltage},
    }
    summary = {"samples": len(trace), "max_photon_number": float(trace.photon_number.max())}
    _emit(sc.ScenarioResult("simulate", tables, summary, config), args)


def _cmd_oracle(config, args):
    s = config.spins
    n = int(round(s.n_spins))
    if abs(s.n_spins - n) > 1e-9:
        raise DomainError("the oracle needs an integer spins.n_spins")
    lt = evolve_with_adaptive_cutoff(
        lambda d: polarized_state(d, n, s.initial_sz), n, config, config.sim.t_end, config.sim.dt,
        config.sim.stride, dim_fock=args.dim_fock,
    )
    summary = {"n_spins": n, "dim_fock": lt.dim_fock, "max_fock_tail": float(lt.fock_tail.max())}
    _emit(sc.ScenarioResult("oracle", {"trace": lindblad_table(lt)}, summary, config), args)


def _cmd_calibrate(config, args):
    if not args.as_is:
        config = sc.rabi_config(config)
    powers = dbm_to_watt(args.powers_dbm or sc.DEFAULT_RABI_POWERS_DBM)
    _emit(sc.run_rabi_calibration(config, powers, threads=_threads(args)), args)


def _cmd_sensitivity(config, args):
    _emit(sc.run_sensitivity(config, args.b_test, args.delta_f), args)


def _cmd_gain(config, args):
    b1 = args.b1 or np.linspace(2.47, 100.0, 9)
    k = int(round(args.span_mhz / args.step_mhz))
    freqs = config.spins.omega_s_center / TWO_PI + np.arange(-k, k + 1) * args.step_mhz * 1e6
    _emit(sc.run_response_and_gain(config, b1, freqs, args.gain_b1, threads=_threads(args)), args)


def _cmd_heterodyne(config, args):
    det = sc.heterodyne_detunings(args.max_mhz * 1e6, args.step_khz * 1e3)
    _emit(sc.run_heterodyne_sweep(config, det, scale=args.scale, threads=_threads(args)), args)


def _cmd_compare(config, args):
    _emit(sc.run_oracle_comparison(config, args.window, args.dim_fock), args)


HANDLERS = {
    "validate": _cmd_validate,
    "simulate": _cmd_simulate,
    "oracle": _cmd_oracle,
    "calibrate": _cmd_calibrate,
    "sensitivity": _cmd_sensitivity,
    "gain-sweep": _cmd_gain,
    "heterodyne": _cmd_heterodyne,
    "compare-oracle": _cmd_compare,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    try:
        config = _effective_config(args)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    try:
        HANDLERS[args.command](config, args)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except (ReceiverError, OSError, ValueError, ArithmeticError, MemoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
