"""Preset measurement sequences: pulsed ODMR, Hahn echo, polarization, transfer, storage.

Every sweep returns a :class:`SweepResult`. Sweep points are independent; with
dephasing each point uses its own ensemble seeded with ``seed ^ index`` so
results do not depend on how points are scheduled.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .engine import (
    DephasingSpec,
    Dynamics,
    MwPulse,
    OpticalInit,
    PulseSequence,
    Readout,
    SpinState,
    Wait,
    electron_reduced,
    nuclear_reduced,
)
from .fitting import FitError, FitResult, fit_damped_cosine, fit_lorentzians, polarization_from_fit
from .hamiltonian import DegenerateError, nuclear_doublet_splitting, quantization_axes, system_eigen
from .params import SystemParams

THREADS_ENV = "NVC13_THREADS"
DEFAULT_SEED = 20170101


@dataclass(frozen=True)
class PulseSpec:
    """Microwave pulse settings shared by the preset experiments."""

    rabi: float = 2e6  # Hz; pi pulse = 1/(2 rabi) = 250 ns
    ideal: bool = False
    branch: int = 1

    def __post_init__(self):
        if not (self.rabi > 0 and math.isfinite(self.rabi)):
            raise ValueError("rabi frequency must be > 0")
        if self.branch not in (1, -1):
            raise ValueError("branch must be +1 or -1")

    @property
    def pi_duration(self) -> float:
        return 0.5 / self.rabi


@dataclass
class SweepResult:
    axis_name: str
    axis_values: np.ndarray
    signal: np.ndarray
    params_snapshot: SystemParams
    seed: int
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.axis_values = np.asarray(self.axis_values, dtype=float)
        self.signal = np.asarray(self.signal, dtype=float)
        if self.axis_values.shape != self.signal.shape:
            raise ValueError("axis and signal lengths differ")


@dataclass
class PolarizationResult:
    p: float
    p_down: float
    p_up: float
    n_steps: int
    p_max_geometric: float
    p_populations: float  # from the nuclear reduced state, no fit
    spectrum: SweepResult | None = None
    fit: FitResult | None = None


@dataclass
class TransferResult:
    fidelity: float
    electron_state: np.ndarray  # 2x2 on (|0'>, |1'>), frame phase removed
    nuclear_down_population: float
    frame_phase: float


def _threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _map(fn, n: int) -> list:
    workers = min(_threads(), n) if n else 1
    if workers <= 1:
        return [fn(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, range(n)))


def _point_dynamics(params, dephasing, seed, index, shared):
    if dephasing is None:
        return shared
    return Dynamics(params, dephasing.with_seed(seed ^ index))


def _branch_frequencies(d: Dynamics, branch: int) -> tuple[float, float]:
    return d.transition_frequencies(branch)


def branch_window(params: SystemParams, margin: float = 10e6, points: int = 401, branch: int = 1) -> np.ndarray:
    """Frequencies covering both hyperfine lines of one ODMR branch plus a margin."""
    lo, hi = Dynamics(params).transition_frequencies(branch)
    return np.linspace(lo - margin, hi + margin, points)


# --- pulsed ODMR -----------------------------------------------------------------

def pulsed_odmr(params: SystemParams, frequencies, pulse_spec: PulseSpec = PulseSpec(),
                dephasing: DephasingSpec | None = None, initial: SpinState | None = None,
                seed: int = DEFAULT_SEED) -> SweepResult:
    """Optical init, one pi pulse at each frequency, readout of P(|0'>)."""
    freqs = np.asarray(frequencies, dtype=float)
    d_gs = params.constants.D_gs
    if freqs.size and np.abs(freqs - d_gs).max() > 1e9:
        raise ValueError("ODMR frequencies must lie within 1 GHz of D_gs")
    shared = Dynamics(params)
    start = SpinState.maximally_mixed() if initial is None else initial

    def point(i):
        d = _point_dynamics(params, dephasing, seed, i, shared)
        rho = d.optical_init(d.batch(start))
        el = MwPulse(freqs[i], pulse_spec.rabi, pulse_spec.pi_duration, ideal=pulse_spec.ideal,
                     branch=pulse_spec.branch)
        return d.population(d.pulse(rho, el), 0)

    sig = np.clip(_map(point, freqs.size), 0.0, 1.0)
    return SweepResult("freq_hz", freqs, sig, params, seed, {"experiment": "odmr", "rabi_hz": pulse_spec.rabi})


def odmr_splitting(result: SweepResult, n_dips: int = 2) -> tuple[float, FitResult]:
    fit = fit_lorentzians(result.axis_values, result.signal, n_dips)
    c = fit.centers()
    return c[1] - c[0] if n_dips == 2 else c[-1] - c[-2], fit


# --- spin echo ------------------------------------------------------------------------

def echo_sequence(tau: float, frequency: float, pulse_spec: PulseSpec) -> PulseSequence:
    """pi/2 - tau/2 - pi - tau/2 - pi/2 with tau the *total* free evolution time.

    All pulses share phase 0, so a fully coherent electron returns to |0'>
    (the three rotations add up to 2 pi).
    """
    half = pulse_spec.pi_duration / 2

    def mk(duration):
        return MwPulse(frequency, pulse_spec.rabi, duration, 0.0, pulse_spec.ideal, False, pulse_spec.branch)

    return PulseSequence([
        OpticalInit(), mk(half), Wait(tau / 2), mk(2 * half), Wait(tau / 2), mk(half), Readout(),
    ])


def spin_echo(params: SystemParams, taus, dephasing: DephasingSpec | None = None,
              pulse_spec: PulseSpec = PulseSpec(rabi=50e6, ideal=True),
              seed: int = DEFAULT_SEED) -> SweepResult:
    """Hahn echo on the 0 <-> +1 branch, non-selective pulses at the branch centre."""
    taus = np.asarray(taus, dtype=float)
    if np.any(taus < 0) or np.any(np.diff(taus) <= 0):
        raise ValueError("tau values must be non-negative and ascending")
    shared = Dynamics(params)
    f = float(np.mean(_branch_frequencies(shared, pulse_spec.branch)))

    def point(i):
        d = _point_dynamics(params, dephasing, seed, i, shared)
        _, p = d.run(echo_sequence(taus[i], f, pulse_spec), SpinState.maximally_mixed())
        return p

    sig = np.clip(_map(point, taus.size), 0.0, 1.0)
    return SweepResult("tau_s", taus, sig, params, seed, {"experiment": "echo", "drive_hz": f})


def fit_echo(result: SweepResult, max_frequency: float | None = None) -> tuple[float, FitResult]:
    """Fit exp(-tau/T_SE) cos(2 pi nu0 tau / 2); returns (nu0, fit).

    The model frequency in tau is nu0/2 because tau is the total free time
    and the nuclear modulation develops over each half. Hard pulses also
    imprint a modulation at nu1/2 of about the same depth, so the fit is
    seeded from the strongest spectral peak below nu1/4 (halfway to it)
    unless ``max_frequency`` says otherwise.
    """
    if max_frequency is None:
        try:
            max_frequency = 0.25 * nuclear_doublet_splitting(system_eigen(result.params_snapshot), 1)
        except DegenerateError:
            max_frequency = None
    fit = fit_damped_cosine(result.axis_values, result.signal, "exponential", max_frequency=max_frequency)
    return 2.0 * fit["nu"], fit


# --- polarization -----------------------------------------------------------------------

def polarize(params: SystemParams, n_steps: int = 4, pulse_spec: PulseSpec = PulseSpec(),
             dephasing: DephasingSpec | None = None, readout_spec: PulseSpec = PulseSpec(),
             frequencies=None, fit_readout: bool = True) -> PolarizationResult:
    """Repeat [init, selective pi on the |down> line, wait 1/(2 nu0')], then read out by ODMR.

    The polarization is taken from the two dip amplitudes of a double
    Lorentzian fit to the readout spectrum.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    d = Dynamics(params, dephasing)
    axes = quantization_axes(d.eig)
    nu0 = nuclear_doublet_splitting(d.eig, 0)
    f_down, _ = _branch_frequencies(d, 1)
    wait = 0.5 / nu0
    pulse = MwPulse(f_down, pulse_spec.rabi, pulse_spec.pi_duration, ideal=pulse_spec.ideal)

    rho = d.batch(SpinState.maximally_mixed())
    t = 0.0
    for _ in range(n_steps):
        rho = d.optical_init(rho)
        rho = d.pulse(rho, pulse, t)
        t += 0.0 if pulse.ideal else pulse.duration
        rho = d.wait(rho, wait)
        t += wait
    rho = d.optical_init(rho)

    sigma = np.mean([nuclear_reduced(r, d.frames) for r in rho], axis=0)
    pd = float((axes.down.conj() @ sigma @ axes.down).real)
    pu = float((axes.up.conj() @ sigma @ axes.up).real)
    p_pop = (pd - pu) / (pd + pu)
    result = PolarizationResult(p_pop, pd, pu, n_steps, axes.p_max, p_pop)
    if not fit_readout:
        return result

    freqs = branch_window(params) if frequencies is None else np.asarray(frequencies, dtype=float)
    sig = []
    for f in freqs:
        el = MwPulse(f, readout_spec.rabi, readout_spec.pi_duration, ideal=readout_spec.ideal)
        sig.append(d.population(d.pulse(rho, el), 0))
    spectrum = SweepResult("freq_hz", freqs, np.clip(sig, 0, 1), params,
                           DEFAULT_SEED if dephasing is None else dephasing.seed,
                           {"experiment": "polarize-readout", "n_steps": n_steps})
    # seed at the known line positions: with one line nearly emptied, the
    # automatic seeding would latch onto a sidelobe of the other
    f_up = _branch_frequencies(d, 1)[1]
    width = 1.6 * readout_spec.rabi
    depth = [1.0 - float(np.interp(f, freqs, spectrum.signal)) for f in (f_down, f_up)]
    init = {"base": 1.0, "centers": [f_down, f_up], "widths": [width, width],
            "amplitudes": [max(v, 1e-3) for v in depth]}
    fit = fit_lorentzians(freqs, spectrum.signal, 2, init=init)
    if not fit.converged:
        raise FitError("double-Lorentzian fit of the readout spectrum did not converge",
                       {"fit": fit.parameters, "status": fit.diagnostics})
    p = polarization_from_fit(fit)
    return PolarizationResult(p, fit["A1"], fit["A2"], n_steps, axes.p_max, p_pop, spectrum, fit)


# --- state transfer ----------------------------------------------------------------------

def _transfer_state(params, amps, pulse_spec, d: Dynamics) -> np.ndarray:
    p_amp, q_amp = amps
    axes = quantization_axes(d.eig)
    nu0 = nuclear_doublet_splitting(d.eig, 0)
    f_down, _ = _branch_frequencies(d, 1)
    nuc = p_amp * axes.down + q_amp * axes.up
    start = SpinState.product(d.eig, 0, nuc)
    seq = PulseSequence([
        MwPulse(f_down, pulse_spec.rabi, pulse_spec.pi_duration, ideal=pulse_spec.ideal),
        Wait(0.5 / nu0),
    ])
    rho, _ = d.run(seq, start)
    return rho


def transfer_details(params: SystemParams, nuclear_input, pulse_spec: PulseSpec = PulseSpec(ideal=True)) -> TransferResult:
    """Map |0'> (x) (p|down> + q|up>) onto the electron as p|1'> + q|0'>.

    The deterministic relative phase the two branches pick up (drive frame,
    nuclear eigenphases) is calibrated once from the equal-superposition input
    and removed before computing the fidelity.
    """
    p_amp, q_amp = (complex(v) for v in nuclear_input)
    if abs(abs(p_amp) ** 2 + abs(q_amp) ** 2 - 1.0) > 1e-9:
        raise ValueError("nuclear input must be normalised")
    d = Dynamics(params)
    ref = _transfer_state(params, (1 / math.sqrt(2), 1 / math.sqrt(2)), pulse_spec, d)
    rho_ref = electron_reduced(ref.mean(axis=0), d.frames)
    chi = float(np.angle(rho_ref[1, 0])) if abs(rho_ref[1, 0]) > 1e-12 else 0.0

    rho = _transfer_state(params, (p_amp, q_amp), pulse_spec, d).mean(axis=0)
    rho_e = electron_reduced(rho, d.frames)
    z = np.diag([1.0, np.exp(-1j * chi)])
    rho_e = z @ rho_e @ z.conj()
    target = np.array([q_amp, p_amp])
    fid = min(1.0, max(0.0, float((target.conj() @ rho_e @ target).real)))
    sigma = nuclear_reduced(rho, d.frames)
    down = quantization_axes(d.eig).down
    return TransferResult(fid, rho_e, float((down.conj() @ sigma @ down).real), chi)


def state_transfer(params: SystemParams, nuclear_input, pulse_spec: PulseSpec = PulseSpec(ideal=True)) -> float:
    return transfer_details(params, nuclear_input, pulse_spec).fidelity


# --- storage -----------------------------------------------------------------------------

def storage_sequence(tau: float, frequency: float, pulse_spec: PulseSpec) -> PulseSequence:
    pi = MwPulse(frequency, pulse_spec.rabi, pulse_spec.pi_duration, ideal=pulse_spec.ideal)
    return PulseSequence([OpticalInit(), pi, Wait(tau), pi, Readout()])


def storage(params: SystemParams, taus, pulse_spec: PulseSpec = PulseSpec(),
            dephasing: DephasingSpec | None = None, seed: int = DEFAULT_SEED) -> SweepResult:
    """Selective pi - wait tau - selective pi on the |down> line, then P(|0'>)."""
    taus = np.asarray(taus, dtype=float)
    if np.any(taus < 0) or np.any(np.diff(taus) <= 0):
        raise ValueError("tau values must be non-negative and ascending")
    shared = Dynamics(params)
    f_down, _ = _branch_frequencies(shared, 1)

    def point(i):
        d = _point_dynamics(params, dephasing, seed, i, shared)
        _, p = d.run(storage_sequence(taus[i], f_down, pulse_spec), SpinState.maximally_mixed())
        return p

    sig = np.clip(_map(point, taus.size), 0.0, 1.0)
    return SweepResult("tau_s", taus, sig, params, seed, {"experiment": "store", "drive_hz": f_down})


def storage_closed_form(a: float, b: float, nu0: float, taus) -> np.ndarray:
    """(1 + a^4 + b^4 + 2 a^2 b^2 cos(2 pi nu0 tau)) / 2."""
    taus = np.asarray(taus, dtype=float)
    return 0.5 * (1 + a**4 + b**4 + 2 * a * a * b * b * np.cos(2 * math.pi * nu0 * taus))


def fit_storage(result: SweepResult) -> FitResult:
    return fit_damped_cosine(result.axis_values, result.signal, "gaussian")
