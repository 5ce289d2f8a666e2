"""YAML run configurations and sequence files.

Every dimensional value carries its unit (``"7 mT"``, ``"250 ns"``); values
are converted to SI on load. Unknown keys are rejected.

Example::

    preset: paper-nv
    experiment:
      kind: echo
      pulse: {rabi: 50 MHz, ideal: true}
    sweep: {start: 0 us, stop: 4 us, points: 201}
    dephasing: {electron_decay_time: 1.5 us, lineshape: lorentzian, static: false, samples: 200}
    seed: 20170101
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .engine import DephasingSpec, MwPulse, OpticalInit, PulseSequence, Readout, SequenceError, Wait
from .experiments import DEFAULT_SEED, PulseSpec
from .params import CONSTANT_SETS, HyperfineTensor, MagneticField, ParameterError, PhysicalConstants, SystemParams
from .presets import PRESETS, POLARIZE_STEPS
from .units import UnitError, parse_quantity

EXPERIMENTS = ("odmr", "echo", "polarize", "transfer", "store", "sequence")
SWEEP_DIMENSION = {"odmr": "frequency", "echo": "time", "store": "time"}


class ConfigError(ValueError):
    """Base class for configuration problems (CLI exit code 2)."""


class ConfigParseError(ConfigError):
    def __init__(self, msg, line=None, column=None):
        where = f" at line {line}, column {column}" if line is not None else ""
        super().__init__(f"{msg}{where}")
        self.line, self.column = line, column


class ConfigKeyError(ConfigError):
    """Unknown or missing key."""


class ConfigRangeError(ConfigError):
    """Value outside its allowed range."""


class ConfigUnitError(ConfigError, UnitError):
    """Missing, unknown or mismatched unit."""


@dataclass(frozen=True)
class SweepSpec:
    """Linear sweep; start/stop None means the experiment's default range."""

    start: float | None
    stop: float | None
    points: int
    dimension: str

    def values(self, default_range: tuple[float, float] | None = None) -> np.ndarray:
        lo, hi = (self.start, self.stop) if self.start is not None else default_range
        return np.linspace(lo, hi, self.points)


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str
    pulse: PulseSpec | None = None  # None: the experiment's own default
    n_steps: int = POLARIZE_STEPS
    nuclear_input: tuple = (1.0, 0.0)
    sequence: PulseSequence | None = None
    readout_pulse: PulseSpec = PulseSpec()


@dataclass(frozen=True)
class RunConfig:
    params: SystemParams
    experiment: ExperimentSpec | None = None
    sweep: SweepSpec | None = None
    dephasing: DephasingSpec | None = None
    output: str | None = None
    seed: int = DEFAULT_SEED
    preset: str | None = None
    config_hash: str = field(default="", compare=False)


# --- helpers ---------------------------------------------------------------------

def _check_keys(d, allowed, where):
    if not isinstance(d, dict):
        raise ConfigParseError(f"{where}: expected a mapping, got {type(d).__name__}")
    extra = sorted(set(d) - set(allowed))
    if extra:
        raise ConfigKeyError(f"{where}: unknown key {extra[0]!r} (allowed: {', '.join(sorted(allowed))})")


def _q(d, key, dimension, where, default=None, default_unit=None):
    if key not in d:
        if default is None:
            raise ConfigKeyError(f"{where}: missing key {key!r}")
        return default
    try:
        return parse_quantity(d[key], dimension, default_unit=default_unit)
    except UnitError as exc:
        raise ConfigUnitError(f"{where}.{key}: {exc}") from None


def _int(d, key, where, default, minimum):
    v = d.get(key, default)
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigRangeError(f"{where}.{key}: expected an integer, got {v!r}")
    if v < minimum:
        raise ConfigRangeError(f"{where}.{key}: must be >= {minimum}, got {v}")
    return v


def _bool(d, key, where, default):
    v = d.get(key, default)
    if not isinstance(v, bool):
        raise ConfigRangeError(f"{where}.{key}: expected true/false, got {v!r}")
    return v


def _read_yaml(text: str):
    try:
        return yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        line = mark.line + 1 if mark else None
        col = mark.column + 1 if mark else None
        raise ConfigParseError(f"YAML syntax error: {exc.problem or exc}", line, col) from None
    except yaml.YAMLError as exc:
        raise ConfigParseError(f"YAML error: {exc}") from None


# --- sections ---------------------------------------------------------------------

def _constants(spec) -> PhysicalConstants:
    if spec is None:
        return CONSTANT_SETS["paper-constant"]
    if isinstance(spec, str):
        if spec not in CONSTANT_SETS:
            raise ConfigKeyError(f"constants: unknown set {spec!r}; choose from {sorted(CONSTANT_SETS)}")
        return CONSTANT_SETS[spec]
    _check_keys(spec, {"base", "mu_e", "mu_n", "h", "D_gs"}, "constants")
    base = _constants(spec.get("base"))
    try:
        return PhysicalConstants(
            mu_e=_q(spec, "mu_e", "moment", "constants", base.mu_e),
            mu_n=_q(spec, "mu_n", "moment", "constants", base.mu_n),
            h=_q(spec, "h", "action", "constants", base.h),
            D_gs=_q(spec, "D_gs", "frequency", "constants", base.D_gs),
        )
    except ParameterError as exc:
        raise ConfigRangeError(f"constants: {exc}") from None


def _field(spec) -> MagneticField:
    _check_keys(spec, {"polar", "cartesian"}, "field")
    if len(spec) != 1:
        raise ConfigKeyError("field: give exactly one of 'polar' or 'cartesian'")
    if "polar" in spec:
        p = spec["polar"]
        _check_keys(p, {"magnitude", "theta", "phi"}, "field.polar")
        mag = _q(p, "magnitude", "field", "field.polar")
        if mag < 0:
            raise ConfigRangeError("field.polar.magnitude must be >= 0")
        return MagneticField.polar(mag, _q(p, "theta", "angle", "field.polar"),
                                   _q(p, "phi", "angle", "field.polar", 0.0))
    c = spec["cartesian"]
    _check_keys(c, {"bx", "by", "bz"}, "field.cartesian")
    return MagneticField(*(_q(c, k, "field", "field.cartesian", 0.0) for k in ("bx", "by", "bz")))


def _hyperfine(spec) -> HyperfineTensor:
    _check_keys(spec, {"unit", "matrix"}, "hyperfine")
    if "unit" not in spec or "matrix" not in spec:
        raise ConfigKeyError("hyperfine: needs 'unit' and 'matrix'")
    m = spec["matrix"]
    if not (isinstance(m, list) and len(m) == 3 and all(isinstance(r, list) and len(r) == 3 for r in m)):
        raise ConfigRangeError("hyperfine.matrix must be a 3x3 row-major list")
    try:
        rows = [[parse_quantity(v, "frequency", default_unit=spec["unit"]) for v in r] for r in m]
        return HyperfineTensor.from_array(rows)
    except UnitError as exc:
        raise ConfigUnitError(f"hyperfine: {exc}") from None
    except ParameterError as exc:
        raise ConfigRangeError(f"hyperfine: {exc}") from None


def params_from_mapping(d: dict) -> tuple[SystemParams, str | None]:
    """Build SystemParams from the preset/constants/field/hyperfine keys of a config."""
    name = d.get("preset")
    constants = _constants(d.get("constants"))
    if name is not None:
        if name not in PRESETS:
            raise ConfigKeyError(f"preset: unknown preset {name!r}; choose from {sorted(PRESETS)}")
        base = PRESETS[name].params()
        fld, hf = base.field, base.hyperfine
    else:
        if "field" not in d or "hyperfine" not in d:
            raise ConfigKeyError("give a 'preset' or both 'field' and 'hyperfine'")
        fld = hf = None
    if "field" in d:
        fld = _field(d["field"])
    if "hyperfine" in d:
        hf = _hyperfine(d["hyperfine"])
    try:
        return SystemParams(constants, fld, hf), name
    except ParameterError as exc:
        raise ConfigRangeError(str(exc)) from None


def _pulse(spec, where) -> PulseSpec | None:
    if spec is None:
        return None
    _check_keys(spec, {"rabi", "ideal", "branch"}, where)
    rabi = _q(spec, "rabi", "frequency", where, 2e6)
    if rabi <= 0:
        raise ConfigRangeError(f"{where}.rabi must be > 0")
    branch = spec.get("branch", 1)
    if branch not in (1, -1):
        raise ConfigRangeError(f"{where}.branch must be 1 or -1")
    return PulseSpec(rabi, _bool(spec, "ideal", where, False), branch)


def _dephasing(spec) -> DephasingSpec | None:
    if spec is None:
        return None
    allowed = {"electron_width", "nuclear_width", "electron_decay_time", "electron_t2_star",
               "nuclear_t2_star", "samples", "lineshape", "static"}
    _check_keys(spec, allowed, "dephasing")
    lineshape = spec.get("lineshape", "gaussian")
    if lineshape not in ("gaussian", "lorentzian"):
        raise ConfigRangeError(f"dephasing.lineshape: unknown lineshape {lineshape!r}")

    def width(direct, via_exp, via_t2):
        given = [k for k in (direct, via_exp, via_t2) if k and k in spec]
        if len(given) > 1:
            raise ConfigKeyError(f"dephasing: give only one of {', '.join(given)}")
        if not given:
            return 0.0
        k = given[0]
        if k == direct:
            v = _q(spec, k, "frequency", "dephasing")
        else:
            t = _q(spec, k, "time", "dephasing")
            if t <= 0:
                raise ConfigRangeError(f"dephasing.{k} must be > 0")
            v = DephasingSpec.width_for_exponential(t) if k == via_exp else DephasingSpec.sigma_for_t2_star(t)
        if v < 0:
            raise ConfigRangeError(f"dephasing.{k} must be >= 0")
        return v

    return DephasingSpec(
        electron_sigma=width("electron_width", "electron_decay_time", "electron_t2_star"),
        nuclear_sigma=width("nuclear_width", None, "nuclear_t2_star"),
        samples=_int(spec, "samples", "dephasing", 200, 1),
        lineshape=lineshape,
        static=_bool(spec, "static", "dephasing", True),
    )


def _sweep(spec, dimension) -> SweepSpec:
    _check_keys(spec, {"start", "stop", "points"}, "sweep")
    if "points" not in spec:
        raise ConfigKeyError("sweep: missing key 'points'")
    points = _int(spec, "points", "sweep", None, 2)
    if ("start" in spec) != ("stop" in spec):
        raise ConfigKeyError("sweep: give both 'start' and 'stop', or neither")
    if "start" not in spec:
        return SweepSpec(None, None, points, dimension)
    start = _q(spec, "start", dimension, "sweep")
    stop = _q(spec, "stop", dimension, "sweep")
    if stop <= start:
        raise ConfigRangeError("sweep: stop must be greater than start")
    if dimension == "time" and start < 0:
        raise ConfigRangeError("sweep: times must be >= 0")
    return SweepSpec(start, stop, points, dimension)


# --- sequences --------------------------------------------------------------------

def parse_sequence(items) -> PulseSequence:
    """Sequence elements from a YAML list.

    Items: ``init``; ``{pulse: {frequency, rabi, duration, phase, ideal, selective, branch}}``;
    ``{wait: "500 ns"}``; ``readout`` or ``{readout: {contrast: 0.3}}``.
    """
    if not isinstance(items, list) or not items:
        raise ConfigParseError("sequence: expected a non-empty list of elements")
    out = []
    for i, item in enumerate(items):
        where = f"sequence[{i}]"
        if item == "init":
            out.append(OpticalInit())
        elif item == "readout":
            out.append(Readout())
        elif isinstance(item, dict) and len(item) == 1:
            (kind, body), = item.items()
            if kind == "wait":
                t = _q({"wait": body}, "wait", "time", where)
                if t < 0:
                    raise ConfigRangeError(f"{where}: wait must be >= 0")
                out.append(Wait(t))
            elif kind == "readout":
                _check_keys(body, {"contrast"}, where)
                c = body.get("contrast")
                out.append(Readout(None if c is None else float(c)))
            elif kind == "pulse":
                _check_keys(body, {"frequency", "rabi", "duration", "phase", "ideal", "selective", "branch"}, where)
                try:
                    out.append(MwPulse(
                        frequency=_q(body, "frequency", "frequency", where),
                        rabi=_q(body, "rabi", "frequency", where),
                        duration=_q(body, "duration", "time", where),
                        phase=_q(body, "phase", "angle", where, 0.0),
                        ideal=_bool(body, "ideal", where, False),
                        selective=_bool(body, "selective", where, True),
                        branch=body.get("branch", 1),
                    ))
                except (ValueError, SequenceError) as exc:
                    if isinstance(exc, ConfigError):
                        raise
                    raise ConfigRangeError(f"{where}: {exc}") from None
            else:
                raise ConfigKeyError(f"{where}: unknown element {kind!r}")
        else:
            raise ConfigParseError(f"{where}: cannot interpret {item!r}")
    seq = PulseSequence(out)
    try:
        seq.validate(require_readout=True)
    except SequenceError as exc:
        raise ConfigRangeError(str(exc)) from None
    return seq


# --- top level ----------------------------------------------------------------------

TOP_KEYS = {"preset", "constants", "field", "hyperfine", "experiment", "sweep", "dephasing", "output", "seed"}


def config_from_mapping(d) -> RunConfig:
    if d is None:
        d = {}
    _check_keys(d, TOP_KEYS, "config")
    params, name = params_from_mapping(d)
    exp = sweep = None
    if "experiment" in d:
        e = d["experiment"]
        _check_keys(e, {"kind", "pulse", "readout_pulse", "n_steps", "nuclear_input", "sequence"}, "experiment")
        kind = e.get("kind")
        if kind not in EXPERIMENTS:
            raise ConfigRangeError(f"experiment.kind must be one of {', '.join(EXPERIMENTS)}, got {kind!r}")
        nin = e.get("nuclear_input", [1.0, 0.0])
        if not (isinstance(nin, list) and len(nin) == 2):
            raise ConfigRangeError("experiment.nuclear_input must be a pair [p, q]")
        try:
            nin = tuple(complex(v) for v in nin)
        except (TypeError, ValueError):
            raise ConfigRangeError("experiment.nuclear_input entries must be numbers") from None
        if abs(abs(nin[0]) ** 2 + abs(nin[1]) ** 2 - 1.0) > 1e-9:
            raise ConfigRangeError("experiment.nuclear_input must be normalised")
        seq = parse_sequence(e["sequence"]) if "sequence" in e else None
        if kind == "sequence" and seq is None:
            raise ConfigKeyError("experiment: kind 'sequence' needs a 'sequence' list")
        exp = ExperimentSpec(
            kind=kind,
            pulse=_pulse(e.get("pulse"), "experiment.pulse"),
            n_steps=_int(e, "n_steps", "experiment", POLARIZE_STEPS, 1),
            nuclear_input=nin,
            sequence=seq,
            readout_pulse=_pulse(e.get("readout_pulse"), "experiment.readout_pulse") or PulseSpec(),
        )
        if "sweep" in d:
            if kind not in SWEEP_DIMENSION:
                raise ConfigKeyError(f"sweep: experiment {kind!r} takes no sweep")
            sweep = _sweep(d["sweep"], SWEEP_DIMENSION[kind])
    elif "sweep" in d:
        raise ConfigKeyError("sweep: needs an 'experiment' section")
    seed = d.get("seed", DEFAULT_SEED)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigRangeError(f"seed must be a non-negative integer, got {seed!r}")
    dephasing = _dephasing(d.get("dephasing"))
    if dephasing is not None:
        dephasing = dephasing.with_seed(seed)
    cfg = RunConfig(params, exp, sweep, dephasing, d.get("output"), seed, name)
    return _with_hash(cfg)


def read_mapping(path) -> dict:
    """Raw YAML mapping of a config file (no validation beyond syntax)."""
    data = _read_yaml(Path(path).read_text(encoding="utf-8"))
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigParseError("config: top level must be a mapping")
    return data


def load_config(path) -> RunConfig:
    return config_from_mapping(read_mapping(path))


def read_sequence_items(path) -> list:
    """Raw element list of a sequence file (a list, or a mapping with key 'sequence')."""
    data = _read_yaml(Path(path).read_text(encoding="utf-8"))
    if isinstance(data, dict):
        _check_keys(data, {"sequence"}, "sequence file")
        data = data.get("sequence")
    return data


def load_sequence(path) -> PulseSequence:
    return parse_sequence(read_sequence_items(path))


def _canonical(cfg: RunConfig) -> dict:
    def seq(s):
        return None if s is None else [
            {"type": type(el).__name__, **{k: repr(v) for k, v in vars(el).items()}} for el in s.elements
        ]

    e = cfg.experiment
    return {
        "params": cfg.params.to_dict(),
        "preset": cfg.preset,
        "experiment": None if e is None else {
            "kind": e.kind, "pulse": None if e.pulse is None else vars(e.pulse), "readout_pulse": vars(e.readout_pulse), "n_steps": e.n_steps,
            "nuclear_input": [repr(v) for v in e.nuclear_input], "sequence": seq(e.sequence),
        },
        "sweep": None if cfg.sweep is None else vars(cfg.sweep),
        "dephasing": None if cfg.dephasing is None else vars(cfg.dephasing),
        "seed": cfg.seed,
    }


def config_hash(cfg: RunConfig) -> str:
    """sha256 of the resolved (SI) configuration; the output path is excluded."""
    blob = json.dumps(_canonical(cfg), sort_keys=True, default=repr, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _with_hash(cfg: RunConfig) -> RunConfig:
    from dataclasses import replace

    return replace(cfg, config_hash=config_hash(cfg))

