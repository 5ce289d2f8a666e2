"""Density-matrix evolution through optical/microwave pulse sequences.

Free evolution is exact in the lab frame, ``U = exp(-2 pi i H t)`` via the
eigendecomposition of H. Finite microwave pulses are propagated in the frame
rotating at the drive frequency on the driven dressed manifold, with the
rotating-wave approximation applied to the electron drive only; the full
static Hamiltonian inside each dressed manifold (nuclear terms included) is
kept. A global microwave clock ties the drive phase of every pulse to the
sequence time, so pulse phases are coherent across waits.

Quasi-static dephasing is a Monte-Carlo average over detunings added to the
electron splitting (``delta_e * Sz``) and to the nuclear splitting of the
0' manifold (``delta_n * n0 . I``). Samples are drawn by stratified
(Latin-hypercube) sampling from a seeded generator.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.special import ndtri

from .hamiltonian import (
    I_OPS,
    SZ,
    EigenSystem,
    bare_block,
    build_hamiltonian,
    eigensystem,
    electron_op,
    nuclear_op,
    quantization_axes,
)
from .params import SystemParams

TWO_PI = 2.0 * math.pi
FAR_DETUNING_HZ = 1e9


class SequenceError(ValueError):
    """Malformed pulse sequence; message names the offending element index."""


class FarDetunedWarning(UserWarning):
    pass


@dataclass
class SpinState:
    rho: np.ndarray

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=complex)
        if self.rho.shape != (6, 6):
            raise ValueError(f"density matrix must be 6x6, got {self.rho.shape}")

    @classmethod
    def maximally_mixed(cls) -> "SpinState":
        return cls(np.eye(6, dtype=complex) / 6.0)

    @classmethod
    def pure(cls, psi) -> "SpinState":
        psi = np.asarray(psi, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()))

    @classmethod
    def product(cls, eigs: EigenSystem, ms: int, nuclear) -> "SpinState":
        """|ms'> (x) nuclear, with the nuclear 2-vector mapped through the dressed frame."""
        return cls.pure(eigs.frame(ms) @ np.asarray(nuclear, dtype=complex))

    def check(self, tol: float = 1e-10, pos_tol: float = 1e-9) -> None:
        r = self.rho
        if np.abs(r - r.conj().T).max() > tol:
            raise AssertionError("state is not Hermitian")
        if abs(np.trace(r).real - 1.0) > tol:
            raise AssertionError(f"trace {np.trace(r).real!r} != 1")
        if np.linalg.eigvalsh(0.5 * (r + r.conj().T)).min() < -pos_tol:
            raise AssertionError("state is not positive")

    @property
    def purity(self) -> float:
        return float(np.trace(self.rho @ self.rho).real)


# --- sequence elements -----------------------------------------------------

@dataclass(frozen=True)
class OpticalInit:
    pass


@dataclass(frozen=True)
class MwPulse:
    """Microwave pulse on the 0 <-> branch electron transition.

    ``rabi`` is the on-resonance Rabi frequency (population oscillates as
    sin^2(pi rabi t)), so a pi pulse lasts 1/(2 rabi). ``ideal`` pulses are
    instantaneous rotations by 2 pi rabi duration on the dressed frames:
    selective ones act on the nuclear level of the driven manifold nearest in
    frequency, non-selective ones on both.
    """

    frequency: float
    rabi: float
    duration: float
    phase: float = 0.0
    ideal: bool = False
    selective: bool = True
    branch: int = 1

    @property
    def angle(self) -> float:
        return TWO_PI * self.rabi * self.duration


@dataclass(frozen=True)
class Wait:
    duration: float


@dataclass(frozen=True)
class Readout:
    contrast: float | None = None


PulseElement = Union[OpticalInit, MwPulse, Wait, Readout]


@dataclass(frozen=True)
class PulseSequence:
    elements: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))

    def validate(self, require_readout: bool = True) -> None:
        n = len(self.elements)
        for i, el in enumerate(self.elements):
            if isinstance(el, MwPulse):
                if not (el.duration >= 0 and math.isfinite(el.duration)):
                    raise SequenceError(f"element {i}: pulse duration must be >= 0")
                if not (el.rabi >= 0 and math.isfinite(el.rabi)):
                    raise SequenceError(f"element {i}: rabi frequency must be >= 0")
                if el.branch not in (1, -1):
                    raise SequenceError(f"element {i}: branch must be +1 or -1")
                if not math.isfinite(el.frequency) or not math.isfinite(el.phase):
                    raise SequenceError(f"element {i}: non-finite frequency or phase")
            elif isinstance(el, Wait):
                if not (el.duration >= 0 and math.isfinite(el.duration)):
                    raise SequenceError(f"element {i}: wait duration must be >= 0")
            elif isinstance(el, Readout):
                if i != n - 1:
                    raise SequenceError(f"element {i}: Readout must be the last element")
                if el.contrast is not None and not 0.0 <= el.contrast <= 1.0:
                    raise SequenceError(f"element {i}: contrast must lie in [0, 1]")
            elif not isinstance(el, OpticalInit):
                raise SequenceError(f"element {i}: unknown element {el!r}")
        if require_readout and (n == 0 or not isinstance(self.elements[-1], Readout)):
            raise SequenceError(f"element {n - 1 if n else 0}: sequence must end with Readout")


@dataclass(frozen=True)
class DephasingSpec:
    """Quasi-static detuning ensemble.

    ``electron_sigma``/``nuclear_sigma`` are the standard deviation (Gaussian)
    or half width at half maximum (Lorentzian) of the detuning in Hz. With
    ``static=False`` new detunings are drawn for every Wait and pulses see
    none; Lorentzian per-wait noise then reproduces a Markovian exponential
    coherence decay exp(-2 pi sigma t).
    """

    electron_sigma: float = 0.0
    nuclear_sigma: float = 0.0
    samples: int = 1
    seed: int = 0
    lineshape: str = "gaussian"
    static: bool = True

    def __post_init__(self):
        if self.electron_sigma < 0 or self.nuclear_sigma < 0:
            raise ValueError("dephasing widths must be >= 0")
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        if self.lineshape not in ("gaussian", "lorentzian"):
            raise ValueError(f"unknown lineshape {self.lineshape!r}")

    @staticmethod
    def sigma_for_t2_star(t2_star: float) -> float:
        """Gaussian width giving a free-induction envelope exp(-(t/T2*)^2)."""
        return math.sqrt(2.0) / (TWO_PI * t2_star)

    @staticmethod
    def width_for_exponential(t_decay: float) -> float:
        """Lorentzian HWHM giving exp(-t/T) coherence decay."""
        return 1.0 / (TWO_PI * t_decay)

    def with_seed(self, seed: int) -> "DephasingSpec":
        from dataclasses import replace

        return replace(self, seed=seed)


def _stratified(rng: np.random.Generator, n: int, width: float, lineshape: str) -> np.ndarray:
    if width == 0.0:
        return np.zeros(n)
    u = (rng.permutation(n) + rng.random(n)) / n
    u = np.clip(u, 1e-12, 1.0 - 1e-12)
    if lineshape == "gaussian":
        return width * ndtri(u)
    return width * np.tan(math.pi * (u - 0.5))


def _heig(h: np.ndarray):
    e, v = np.linalg.eigh(h)
    return e, v


def _expm_h(e: np.ndarray, v: np.ndarray, t: float) -> np.ndarray:
    """exp(-2 pi i H t) for a batch of Hermitian H = V diag(e) V^dagger."""
    ph = np.exp(-1j * TWO_PI * e * t)
    return (v * ph[..., None, :]) @ np.swapaxes(v.conj(), -1, -2)


def _conj(u: np.ndarray, rho: np.ndarray) -> np.ndarray:
    return u @ rho @ np.swapaxes(u.conj(), -1, -2)


class Dynamics:
    """Propagators for one parameter set and one detuning ensemble.

    States are handled as batches of shape (samples, 6, 6); results are
    ensemble averages.
    """

    def __init__(self, params: SystemParams, dephasing: DephasingSpec | None = None):
        self.params = params
        self.dephasing = dephasing
        self.h0 = build_hamiltonian(params)
        self.eig = eigensystem(self.h0)
        self.proj = {ms: self.eig.projector(ms) for ms in (0, 1, -1)}
        self.frames = {ms: self.eig.frame(ms) for ms in (0, 1, -1)}
        self.sz = electron_op(SZ)
        self.n = 1 if dephasing is None else dephasing.samples
        self.rng = np.random.default_rng(0 if dephasing is None else dephasing.seed)
        self._n_op = None
        if dephasing is not None and dephasing.nuclear_sigma > 0:
            axis = quantization_axes(self.eig).axis_0
            self._n_op = nuclear_op(sum(axis[k] * I_OPS[k] for k in range(3)))
        self._pulse_cache: dict = {}
        if dephasing is not None and dephasing.static:
            self.h = self._noisy(self.h0)
        else:
            self.h = np.broadcast_to(self.h0, (self.n, 6, 6)).copy()
        self.e, self.v = _heig(self.h)

    def _noisy(self, h: np.ndarray) -> np.ndarray:
        d = self.dephasing
        de = _stratified(self.rng, self.n, d.electron_sigma, d.lineshape)
        out = h[None] + de[:, None, None] * self.sz[None]
        if self._n_op is not None:
            dn = _stratified(self.rng, self.n, d.nuclear_sigma, d.lineshape)
            out = out + dn[:, None, None] * self._n_op[None]
        return out

    # -- channels on batches ------------------------------------------------
    def batch(self, state: SpinState) -> np.ndarray:
        return np.broadcast_to(state.rho, (self.n, 6, 6)).copy()

    def optical_init(self, rho: np.ndarray) -> np.ndarray:
        sigma = sum(np.swapaxes(w.conj(), 0, 1) @ rho @ w for w in self.frames.values())
        w0 = self.frames[0]
        return w0 @ sigma @ w0.conj().T

    def wait(self, rho: np.ndarray, duration: float) -> np.ndarray:
        if duration == 0.0:
            return rho
        if self.dephasing is not None and not self.dephasing.static:
            e, v = _heig(self._noisy(self.h0))
        else:
            e, v = self.e, self.v
        return _conj(_expm_h(e, v, duration), rho)

    def transition_frequencies(self, branch: int = 1) -> tuple[float, float]:
        """(lower, upper) transition frequencies from the mean 0' level to the branch levels."""
        e = self.eig.energies
        e0 = float(np.mean(e[list(self.eig.indices(0))]))
        lo, hi = self.eig.indices(branch)
        return float(e[lo] - e0), float(e[hi] - e0)

    def _check_detuning(self, el: MwPulse) -> None:
        f = self.transition_frequencies(el.branch)
        if min(abs(el.frequency - x) for x in f) > FAR_DETUNING_HZ:
            warnings.warn(
                f"drive at {el.frequency:.6g} Hz is more than 1 GHz from every 0'<->{el.branch:+d}' transition",
                FarDetunedWarning,
                stacklevel=3,
            )

    def pulse(self, rho: np.ndarray, el: MwPulse, t_start: float = 0.0) -> np.ndarray:
        self._check_detuning(el)
        if el.ideal:
            return _conj(self._ideal_unitary(el, t_start), rho)
        if el.duration == 0.0:
            return rho
        return _conj(self._pulse_unitary(el, t_start), rho)

    def _ideal_unitary(self, el: MwPulse, t_start: float) -> np.ndarray:
        w0, wb = self.frames[0], self.frames[el.branch]
        if el.selective:
            lo, hi = self.transition_frequencies(el.branch)
            idx = self.eig.indices(el.branch)
            k = idx[0] if abs(el.frequency - lo) <= abs(el.frequency - hi) else idx[1]
            nvec = wb.conj().T @ self.eig.states[:, k]
            a = np.outer(wb @ nvec, (w0 @ nvec).conj())
        else:
            a = wb @ w0.conj().T
        phase = el.phase + TWO_PI * el.frequency * t_start
        g = np.exp(-1j * phase) * a
        g = g + g.conj().T
        q = a @ a.conj().T + a.conj().T @ a
        th = 0.5 * el.angle
        return np.eye(6) - q + math.cos(th) * q - 1j * math.sin(th) * g

    def _pulse_unitary(self, el: MwPulse, t_start: float) -> np.ndarray:
        key = (el.frequency, el.rabi, el.phase, el.branch)
        cached = self._pulse_cache.get(key)
        pb, p0 = self.proj[el.branch], self.proj[0]
        if cached is None:
            x = bare_block(el.branch) @ bare_block(0).conj().T
            xd = pb @ x @ p0
            drive = 0.5 * el.rabi * (np.exp(-1j * el.phase) * xd)
            drive = drive + drive.conj().T
            blocks = sum(p @ self.h @ p for p in self.proj.values())
            h_rwa = blocks - el.frequency * pb + drive
            cached = _heig(0.5 * (h_rwa + np.swapaxes(h_rwa.conj(), -1, -2)))
            self._pulse_cache[key] = cached
        u = _expm_h(*cached, el.duration)
        # back to the lab frame: R(t) = exp(2 pi i f t P_b)
        eye = np.eye(6)
        r_in = eye + (np.exp(1j * TWO_PI * el.frequency * t_start) - 1.0) * pb
        r_out_dag = eye + (np.exp(-1j * TWO_PI * el.frequency * (t_start + el.duration)) - 1.0) * pb
        return r_out_dag @ u @ r_in

    def population(self, rho: np.ndarray, ms: int = 0) -> float:
        return float(np.mean(np.einsum("ij,nji->n", self.proj[ms], rho).real))

    def mean_state(self, rho: np.ndarray) -> SpinState:
        r = rho.mean(axis=0)
        return SpinState(0.5 * (r + r.conj().T))

    def run(self, sequence: PulseSequence, initial: SpinState, callback=None):
        """Fold the sequence over the ensemble; returns (final batch, readout or None)."""
        sequence.validate(require_readout=False)
        rho = self.batch(initial)
        t = 0.0
        result = None
        for i, el in enumerate(sequence.elements):
            if isinstance(el, OpticalInit):
                rho = self.optical_init(rho)
            elif isinstance(el, MwPulse):
                rho = self.pulse(rho, el, t)
                if not el.ideal:
                    t += el.duration
            elif isinstance(el, Wait):
                rho = self.wait(rho, el.duration)
                t += el.duration
            elif isinstance(el, Readout):
                p = self.population(rho, 0)
                result = p if el.contrast is None else 1.0 - el.contrast * (1.0 - p)
            if callback is not None:
                callback(i, el, rho)
        return rho, result


# --- public single-state channels --------------------------------------------

def optical_init(state: SpinState, params: SystemParams) -> SpinState:
    """Re-initialise the electron into |0'> keeping the nuclear state of every manifold."""
    d = Dynamics(params)
    return d.mean_state(d.optical_init(d.batch(state)))


def mw_pulse(state: SpinState, element: MwPulse, params: SystemParams, t_start: float = 0.0,
             dephasing: DephasingSpec | None = None) -> SpinState:
    d = Dynamics(params, dephasing)
    return d.mean_state(d.pulse(d.batch(state), element, t_start))


def free_evolution(state: SpinState, duration: float, params: SystemParams,
                   dephasing: DephasingSpec | None = None) -> SpinState:
    if duration < 0:
        raise ValueError("duration must be >= 0")
    d = Dynamics(params, dephasing)
    return d.mean_state(d.wait(d.batch(state), duration))


def readout(state: SpinState, params: SystemParams, contrast: float | None = None) -> float:
    """Population of the dressed |0'> manifold, optionally mapped to 1 - C (1 - P)."""
    d = Dynamics(params)
    p = float(np.trace(d.proj[0] @ state.rho).real)
    p = min(1.0, max(0.0, p))
    return p if contrast is None else 1.0 - contrast * (1.0 - p)


def run_sequence(sequence: PulseSequence, initial: SpinState, params: SystemParams,
                 dephasing: DephasingSpec | None = None) -> float:
    sequence.validate(require_readout=True)
    _, p = Dynamics(params, dephasing).run(sequence, initial)
    return float(min(1.0, max(0.0, p)))


def electron_reduced(rho: np.ndarray, frames: dict, manifolds=(0, 1)) -> np.ndarray:
    """Electron density matrix on the given dressed manifolds (nucleus traced out)."""
    k = len(manifolds)
    out = np.zeros((k, k), dtype=complex)
    for i, a in enumerate(manifolds):
        for j, b in enumerate(manifolds):
            out[i, j] = np.trace(frames[a].conj().T @ rho @ frames[b])
    return out


def nuclear_reduced(rho: np.ndarray, frames: dict) -> np.ndarray:
    return sum(w.conj().T @ rho @ w for w in frames.values())
