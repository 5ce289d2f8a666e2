"""Command-line entry point: ``nvc13 <subcommand> ...``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, config_from_mapping, read_mapping, read_sequence_items
from .csvio import emit_csv, fmt, read_two_columns, render_csv
from .engine import SequenceError, SpinState, Dynamics, Readout
from .experiments import (
    branch_window,
    polarize,
    pulsed_odmr,
    spin_echo,
    storage,
    transfer_details,
)
from .fitting import FitError, fit_damped_cosine, fit_lorentzians
from .hamiltonian import DegenerateError, nuclear_doublet_splitting, system_eigen
from .params import ParameterError
from .perturbation import PerturbationError, validate_perturbation
from .units import UnitError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

class NumericFailure(RuntimeError):
    pass


# --- running a resolved config ------------------------------------------------------

def default_range(cfg: RunConfig) -> tuple[float, float, int]:
    kind = cfg.experiment.kind
    if kind == "odmr":
        branch = 1 if cfg.experiment.pulse is None else cfg.experiment.pulse.branch
        f = branch_window(cfg.params, branch=branch)
        return float(f[0]), float(f[-1]), f.size
    if kind == "store":
        nu0 = nuclear_doublet_splitting(system_eigen(cfg.params), 0)
        return 0.0, 3.0 / nu0, 121
    if kind == "echo":
        return 0.0, 4e-6, 201
    raise ConfigError(f"experiment {kind!r} takes no sweep")


def default_axis(cfg: RunConfig) -> np.ndarray:
    if cfg.sweep is not None and cfg.sweep.start is not None:
        return cfg.sweep.values()
    lo, hi, n = default_range(cfg)
    return np.linspace(lo, hi, n if cfg.sweep is None else cfg.sweep.points)


def run_config(cfg: RunConfig):
    """Execute the experiment of a config; returns (result, metadata)."""
    e = cfg.experiment
    if e is None:
        raise ConfigError("config has no experiment section")
    meta = {"experiment": e.kind}
    if cfg.preset:
        meta["preset"] = cfg.preset
    pulse = {} if e.pulse is None else {"pulse_spec": e.pulse}
    if e.kind in ("odmr", "echo", "store"):
        fn = {"odmr": pulsed_odmr, "echo": spin_echo, "store": storage}[e.kind]
        result = fn(cfg.params, default_axis(cfg), dephasing=cfg.dephasing, seed=cfg.seed, **pulse)
        return result, meta
    if e.kind == "polarize":
        r = polarize(cfg.params, e.n_steps, dephasing=cfg.dephasing, readout_spec=e.readout_pulse, **pulse)
        return r, meta
    if e.kind == "transfer":
        return transfer_details(cfg.params, e.nuclear_input, **pulse), meta
    if e.kind == "sequence":
        return run_sequence_readouts(cfg, e.sequence), meta
    raise ConfigError(f"unknown experiment {e.kind!r}")


def run_sequence_readouts(cfg: RunConfig, sequence) -> dict:
    d = Dynamics(cfg.params, cfg.dephasing)
    values = []

    def grab(i, el, rho):
        if isinstance(el, Readout):
            p = d.population(rho, 0)
            values.append(p if el.contrast is None else 1.0 - el.contrast * (1.0 - p))

    d.run(sequence, SpinState.maximally_mixed(), callback=grab)
    return {f"readout_{i}": v for i, v in enumerate(values)}


# --- argument handling -------------------------------------------------------------

EXPERIMENT_OF = {"odmr": "odmr", "echo": "echo", "polarize": "polarize", "transfer": "transfer",
                 "store": "store", "run": "sequence"}


def _mapping(args) -> dict:
    raw = read_mapping(args.config) if args.config else {}
    if args.preset:
        raw["preset"] = args.preset
    if args.constants:
        raw["constants"] = args.constants
    if args.seed is not None:
        raw["seed"] = args.seed
    kind = EXPERIMENT_OF.get(args.command)
    if kind is None:
        return raw
    exp = dict(raw.get("experiment") or {})
    if exp.get("kind", kind) != kind:
        raise ConfigError(f"config describes a {exp['kind']!r} experiment, not {kind!r}")
    exp["kind"] = kind
    pulse = dict(exp.get("pulse") or {})
    if getattr(args, "rabi", None):
        pulse["rabi"] = args.rabi
    if getattr(args, "ideal", False):
        pulse["ideal"] = True
    if pulse:
        exp["pulse"] = pulse
    if getattr(args, "steps", None) is not None:
        exp["n_steps"] = args.steps
    if getattr(args, "input", None):
        exp["nuclear_input"] = [complex(v) if "j" in v else float(v) for v in args.input]
    if getattr(args, "sequence", None):
        exp["sequence"] = read_sequence_items(args.sequence)
    raw["experiment"] = exp
    sweep = dict(raw.get("sweep") or {})
    for key in ("start", "stop", "points"):
        v = getattr(args, key, None)
        if v is not None:
            sweep[key] = v
    if sweep:
        raw["sweep"] = sweep
    return raw


def _common(p):
    p.add_argument("--config", help="YAML run configuration")
    p.add_argument("--preset", help="named parameter preset, e.g. paper-nv")
    p.add_argument("--constants", help="constants set: paper-constant or paper-larmor-consistent")
    p.add_argument("--seed", type=int, help="base seed for dephasing ensembles")
    p.add_argument("-o", "--output", help="CSV output path ('-' for stdout)")


def _sweep_args(p):
    p.add_argument("--start", help='sweep start with unit, e.g. "0 us"')
    p.add_argument("--stop", help='sweep stop with unit, e.g. "4 us"')
    p.add_argument("--points", type=int, help="number of sweep points")


def _pulse_args(p):
    p.add_argument("--rabi", help='Rabi frequency with unit, e.g. "2 MHz"')
    p.add_argument("--ideal", action="store_true", help="instantaneous ideal rotations")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nvc13", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"nvc13 {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    for name, text in (("odmr", "pulsed ODMR frequency sweep"), ("echo", "Hahn echo versus total free time"),
                       ("store", "nuclear storage: pi - wait - pi")):
        p = sub.add_parser(name, help=text)
        _common(p)
        _sweep_args(p)
        _pulse_args(p)

    p = sub.add_parser("polarize", help="repeated polarization steps with ODMR readout")
    _common(p)
    _pulse_args(p)
    p.add_argument("--steps", type=int, help="number of polarization steps (default 4)")

    p = sub.add_parser("transfer", help="nuclear to electron state transfer fidelity")
    _common(p)
    _pulse_args(p)
    p.add_argument("--input", nargs=2, metavar=("P", "Q"), help="nuclear amplitudes of |down> and |up>")

    p = sub.add_parser("fit", help="fit a two-column CSV")
    p.add_argument("csv", help="input CSV (first two numeric columns)")
    p.add_argument("--model", required=True, choices=("lorentzian2", "lorentzian4", "expcos", "gausscos"))
    p.add_argument("-o", "--output", help="CSV row output path")

    p = sub.add_parser("validate-perturbation", help="closed-form 0' precession versus exact diagonalization")
    _common(p)
    p.add_argument("--tolerance", type=float, default=0.10)

    p = sub.add_parser("run", help="run an arbitrary sequence file")
    _common(p)
    p.add_argument("--sequence", help="YAML sequence file")
    return ap


def _print_kv(d: dict, out) -> None:
    for k, v in d.items():
        out.write(f"{k}={fmt(v)}\n")


def _cmd_fit(args) -> int:
    x, y = read_two_columns(args.csv)
    if args.model.startswith("lorentzian"):
        fit = fit_lorentzians(x, y, int(args.model[-1]))
    else:
        fit = fit_damped_cosine(x, y, "exponential" if args.model == "expcos" else "gaussian")
    _print_kv({"model": fit.model, "converged": fit.converged, "residual_norm": fit.residual_norm,
               "iterations": fit.iterations, **fit.parameters,
               **{f"{k}_err": v for k, v in fit.std_errors.items()}}, sys.stdout)
    if args.output:
        emit_csv(fit, args.output, metadata={"source": args.csv})
    if not fit.converged:
        raise NumericFailure(f"fit did not converge: {fit.diagnostics.get('message', '')}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    cfg = config_from_mapping(_mapping(args))
    rep = validate_perturbation(cfg.params, args.tolerance)
    d = rep.as_dict()
    _print_kv(d, sys.stdout)
    if args.output:
        emit_csv(d, args.output, config_hash=cfg.config_hash, seed=cfg.seed)
    else:
        sys.stdout.write(render_csv(d, config_hash=cfg.config_hash, seed=cfg.seed))
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "fit":
            return _cmd_fit(args)
        if args.command == "validate-perturbation":
            return _cmd_validate(args)
        cfg = config_from_mapping(_mapping(args))
        result, meta = run_config(cfg)
        out = args.output or cfg.output or "-"
        emit_csv(result, out, config_hash=cfg.config_hash, seed=cfg.seed, metadata=meta)
        return EXIT_OK
    except (ConfigError, UnitError, ParameterError, SequenceError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FitError, DegenerateError, PerturbationError, NumericFailure, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
