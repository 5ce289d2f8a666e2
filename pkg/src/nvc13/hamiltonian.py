"""Static Hamiltonian of the NV electron (S=1) coupled to one 13C (I=1/2).

Basis order is (mS, mI) = (1,up), (1,down), (0,up), (0,down), (-1,up), (-1,down),
i.e. ``kron(electron, nucleus)`` with Sz = diag(1, 0, -1) and Iz = diag(1/2, -1/2).
All energies are in Hz.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import polar

from .params import HyperfineTensor, SystemParams

_r2 = 1.0 / math.sqrt(2.0)

SX = _r2 * np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=complex)
SY = _r2 * np.array([[0, -1j, 0], [1j, 0, -1j], [0, 1j, 0]], dtype=complex)
SZ = np.diag([1.0, 0.0, -1.0]).astype(complex)
IX = 0.5 * np.array([[0, 1], [1, 0]], dtype=complex)
IY = 0.5 * np.array([[0, -1j], [1j, 0]], dtype=complex)
IZ = 0.5 * np.diag([1.0, -1.0]).astype(complex)
E3 = np.eye(3, dtype=complex)
E2 = np.eye(2, dtype=complex)

S_OPS = (SX, SY, SZ)
I_OPS = (IX, IY, IZ)

MANIFOLDS = (1, 0, -1)
# row offset of each electron manifold in the product basis
_BLOCK = {1: 0, 0: 2, -1: 4}

DEGENERACY_TOL_HZ = 1.0


class DegenerateError(ValueError):
    """Requested quantity depends on a near-degenerate (ambiguous) manifold."""


def electron_op(op: np.ndarray) -> np.ndarray:
    return np.kron(op, E2)


def nuclear_op(op: np.ndarray) -> np.ndarray:
    return np.kron(E3, op)


def bare_block(ms: int) -> np.ndarray:
    """6x2 isometry |ms> (x) I_2 onto the bare electron level ms."""
    e = np.zeros((6, 2), dtype=complex)
    o = _BLOCK[ms]
    e[o, 0] = e[o + 1, 1] = 1.0
    return e


def build_hamiltonian(params: SystemParams) -> np.ndarray:
    c = params.constants
    b = params.field.vector
    alpha = params.hyperfine.array
    h = c.D_gs * electron_op(SZ @ SZ)
    for mu in range(3):
        h += c.gamma_e * b[mu] * electron_op(S_OPS[mu])
        h += c.gamma_n * b[mu] * nuclear_op(I_OPS[mu])
        for nu in range(3):
            if alpha[mu, nu] != 0.0:
                h += alpha[mu, nu] * np.kron(S_OPS[mu], I_OPS[nu])
    return 0.5 * (h + h.conj().T)


def secular_splitting(hyperfine: HyperfineTensor) -> float:
    """Sum over nu of alpha_z,nu: the printed expression for the ODMR hyperfine splitting.

    This is a linear sum, not the norm of the z row; the two agree only when
    a single entry of the row is non-zero.
    """
    return float(sum(hyperfine.rows[2]))


@dataclass(frozen=True)
class EigenSystem:
    energies: np.ndarray  # (6,) ascending, Hz
    states: np.ndarray  # (6, 6) columns are eigenvectors
    manifold_labels: tuple[tuple[int, str], ...]  # (mS, "up"/"down") per eigenvector
    degenerate: bool
    degenerate_manifolds: frozenset

    def indices(self, ms: int) -> tuple[int, int]:
        """Eigenvector indices of a dressed manifold, lower energy first."""
        idx = [i for i, (m, _) in enumerate(self.manifold_labels) if m == ms]
        return tuple(sorted(idx, key=lambda i: self.energies[i]))

    def projector(self, ms: int) -> np.ndarray:
        v = self.states[:, list(self.indices(ms))]
        return v @ v.conj().T

    def frame(self, ms: int) -> np.ndarray:
        """6x2 isometry identifying nuclear 2-vectors with states of the dressed manifold.

        Uses the symmetric (Loewdin) orthonormalisation of the manifold's
        projection of the bare block, so it reduces to the bare block when
        there is no electron mixing.
        """
        v = self.states[:, list(self.indices(ms))]
        overlap = v.conj().T @ bare_block(ms)
        u, _ = polar(overlap)
        return v @ u

    def nuclear_hamiltonian(self, ms: int) -> np.ndarray:
        """2x2 effective nuclear Hamiltonian of a manifold, in its frame."""
        w = self.frame(ms)
        v = self.states[:, list(self.indices(ms))]
        e = self.energies[list(self.indices(ms))]
        h = (w.conj().T @ v) @ np.diag(e) @ (v.conj().T @ w)
        return 0.5 * (h + h.conj().T)

    def mixing(self) -> tuple[float, float, float]:
        """Amplitudes (|alpha|, |beta|, |gamma|) of |0'> on bare |0>, |1>, |-1>.

        Averaged over the two nuclear branches of the 0' manifold.
        """
        idx = list(self.indices(0))
        w = {ms: float(np.mean([np.sum(np.abs(self.states[_BLOCK[ms]:_BLOCK[ms] + 2, i]) ** 2) for i in idx]))
             for ms in MANIFOLDS}
        return math.sqrt(w[0]), math.sqrt(w[1]), math.sqrt(w[-1])


def eigensystem(h: np.ndarray) -> EigenSystem:
    h = np.asarray(h, dtype=complex)
    if not np.allclose(h, h.conj().T, atol=1e-9 * max(1.0, np.abs(h).max())):
        raise ValueError("Hamiltonian is not Hermitian")
    energies, states = np.linalg.eigh(0.5 * (h + h.conj().T))

    weights = np.empty((6, 3))
    for j, ms in enumerate(MANIFOLDS):
        o = _BLOCK[ms]
        weights[:, j] = np.sum(np.abs(states[o:o + 2, :]) ** 2, axis=0)

    # greedy maximal-overlap assignment, two states per manifold
    manifold = [None] * 6
    count = {ms: 0 for ms in MANIFOLDS}
    for flat in np.argsort(-weights, axis=None, kind="stable"):
        i, j = divmod(int(flat), 3)
        ms = MANIFOLDS[j]
        if manifold[i] is None and count[ms] < 2:
            manifold[i] = ms
            count[ms] += 1

    labels = [None] * 6
    for ms in MANIFOLDS:
        o = _BLOCK[ms]
        pair = [i for i in range(6) if manifold[i] == ms]
        up_w = [abs(states[o, i]) ** 2 for i in pair]
        up = pair[int(np.argmax(up_w))]
        for i in pair:
            labels[i] = (ms, "up" if i == up else "down")

    degenerate_ms = set()
    for i in range(6):
        for j in range(i + 1, 6):
            if abs(energies[j] - energies[i]) < DEGENERACY_TOL_HZ:
                degenerate_ms.update({manifold[i], manifold[j]})
    return EigenSystem(
        energies=energies,
        states=states,
        manifold_labels=tuple(labels),
        degenerate=bool(degenerate_ms),
        degenerate_manifolds=frozenset(degenerate_ms),
    )


def system_eigen(params: SystemParams) -> EigenSystem:
    return eigensystem(build_hamiltonian(params))


def nuclear_doublet_splitting(eigs: EigenSystem, manifold: int) -> float:
    """Energy gap of the two nuclear branches of a dressed electron manifold (Hz).

    For manifold 0 this is the exact enhanced precession frequency nu_0'.
    """
    if manifold not in MANIFOLDS:
        raise ValueError(f"manifold must be one of {MANIFOLDS}, got {manifold!r}")
    if manifold in eigs.degenerate_manifolds:
        raise DegenerateError(f"manifold {manifold:+d} is degenerate within {DEGENERACY_TOL_HZ} Hz")
    lo, hi = eigs.indices(manifold)
    return float(eigs.energies[hi] - eigs.energies[lo])


def bloch_axis(h2: np.ndarray) -> tuple[np.ndarray, float]:
    """Unit quantization axis and splitting of a 2x2 nuclear Hamiltonian."""
    vec = np.array([np.trace(h2 @ op).real for op in I_OPS])
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        raise DegenerateError("nuclear doublet has no splitting")
    return vec / norm, 2.0 * norm


@dataclass(frozen=True)
class QuantizationAxes:
    axis_0: np.ndarray  # nuclear axis with the electron in |0'>
    axis_1: np.ndarray  # nuclear axis with the electron in |1'>
    delta: float  # degrees, in [0, 90]
    a: float
    b: float
    phi: float
    down: np.ndarray  # nuclear |down> (lower +1' level), frame coordinates
    up: np.ndarray
    plus: np.ndarray  # 0' eigenvector with the larger |down> overlap
    minus: np.ndarray

    @property
    def p_max(self) -> float:
        """Single-step polarization limit 1 - (a^2 - b^2)^2."""
        return 1.0 - (self.a**2 - self.b**2) ** 2


def _phase_fix(v: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(v)))
    return v * np.exp(-1j * np.angle(v[k]))


def quantization_axes(eigs: EigenSystem) -> QuantizationAxes:
    """Nuclear eigenbases in the 0' and +1' manifolds and their overlap.

    |down> is the lower-energy nuclear level of the +1' manifold; this matches
    the convention that the lower-frequency ODMR dip of the 0 <-> +1 branch
    conserves |down>.
    """
    for ms in (0, 1):
        if ms in eigs.degenerate_manifolds:
            raise DegenerateError(f"manifold {ms:+d} is degenerate; quantization axis undefined")
    h0 = eigs.nuclear_hamiltonian(0)
    h1 = eigs.nuclear_hamiltonian(1)
    axis_0, _ = bloch_axis(h0)
    axis_1, _ = bloch_axis(h1)

    _, v1 = np.linalg.eigh(h1)
    down, up = _phase_fix(v1[:, 0]), _phase_fix(v1[:, 1])
    _, v0 = np.linalg.eigh(h0)
    ov = np.abs(down.conj() @ v0) ** 2
    order = np.argsort(-ov, kind="stable")
    plus, minus = v0[:, order[0]], v0[:, order[1]]
    # global phase so that the |down> coefficient of |+> is real positive
    cd = down.conj() @ plus
    plus = plus * np.exp(-1j * np.angle(cd)) if abs(cd) > 0 else plus
    a = float(abs(down.conj() @ plus))
    cu = up.conj() @ plus
    b = float(abs(cu))
    norm = math.hypot(a, b)
    a, b = a / norm, b / norm
    phi = float(np.angle(cu)) if b > 1e-15 else 0.0
    cosd = min(1.0, abs(float(axis_0 @ axis_1)))
    delta = math.degrees(math.acos(cosd))
    return QuantizationAxes(axis_0, axis_1, delta, a, b, phi, down, up, plus, minus)
