"""Secular / transverse split of the Hamiltonian and second-order estimates of the 0' precession.

The transverse part holds every term carrying Sx or Sy. Because those terms
only connect electron levels that differ by one unit of mS, second order is
organised as a quasi-degenerate (Loewdin) effective Hamiltonian on two model
spaces, the mS=0 block and the mS=+1/-1 pair, each dressed by virtual
excursions into the other. This is needed because the two nuclear levels
inside a block are split by far less than the transverse coupling they
acquire, so non-degenerate perturbation theory would divide by that small
splitting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .hamiltonian import (
    I_OPS,
    MANIFOLDS,
    SX,
    SY,
    bare_block,
    build_hamiltonian,
    electron_op,
    nuclear_doublet_splitting,
    system_eigen,
)
from .params import SystemParams

MIN_DENOMINATOR_HZ = 1e3
REGIME_FACTOR = 10.0


class PerturbationError(ValueError):
    """Second-order expansion is undefined (a vanishing energy denominator)."""


def split_secular(params: SystemParams) -> tuple[np.ndarray, np.ndarray]:
    """(H_secular, H_perp); H_perp holds exactly the Sx and Sy terms."""
    h = build_hamiltonian(params)
    c = params.constants
    b = params.field.vector
    alpha = params.hyperfine.array
    perp = np.zeros((6, 6), dtype=complex)
    for mu, s in ((0, SX), (1, SY)):
        perp += c.gamma_e * b[mu] * electron_op(s)
        for nu in range(3):
            perp += alpha[mu, nu] * np.kron(s, I_OPS[nu])
    perp = 0.5 * (perp + perp.conj().T)
    return h - perp, perp


def _unperturbed_blocks(h_sec: np.ndarray):
    """Eigenpairs of the secular Hamiltonian inside each bare mS block."""
    out = {}
    for ms in MANIFOLDS:
        p = bare_block(ms)
        e, v = np.linalg.eigh(p.conj().T @ h_sec @ p)
        out[ms] = (e, p @ v)
    return out


# model spaces: mS=0 alone, and mS=+1/-1 together because they are
# degenerate at zero axial field and couple at second order through mS=0
_GROUPS = ((0,), (1, -1))


def second_order_doublets(params: SystemParams) -> dict[int, np.ndarray]:
    """Second-order energies of each manifold's nuclear doublet, ascending (Hz)."""
    h_sec, v = split_secular(params)
    blocks = _unperturbed_blocks(h_sec)
    result = {}
    for group in _GROUPS:
        e_n = np.concatenate([blocks[ms][0] for ms in group])
        u_n = np.concatenate([blocks[ms][1] for ms in group], axis=1)
        outside = [ms for ms in MANIFOLDS if ms not in group]
        e_m = np.concatenate([blocks[ms][0] for ms in outside])
        u_m = np.concatenate([blocks[ms][1] for ms in outside], axis=1)
        coup = u_m.conj().T @ v @ u_n  # (outside, model)
        d = e_n[None, :] - e_m[:, None]
        if np.abs(d).min() < MIN_DENOMINATOR_HZ:
            k, i = np.unravel_index(int(np.abs(d).argmin()), d.shape)
            raise PerturbationError(
                f"energy denominator below {MIN_DENOMINATOR_HZ:g} Hz between model level {i} of "
                f"mS={group} and level {k} of mS={tuple(outside)}"
            )
        inv = 1.0 / d
        heff = np.diag(e_n).astype(complex)
        heff += 0.5 * (coup.conj().T @ (coup * inv) + (coup * inv).conj().T @ coup)
        energies, vecs = np.linalg.eigh(0.5 * (heff + heff.conj().T))
        # assign eigenvectors to the bare block carrying most of their weight
        weight = np.stack([np.sum(np.abs(vecs[2 * j:2 * j + 2]) ** 2, axis=0) for j in range(len(group))])
        owner = [None] * len(energies)
        count = dict.fromkeys(group, 0)
        for flat in np.argsort(-weight, axis=None, kind="stable"):
            j, i = divmod(int(flat), len(energies))
            if owner[i] is None and count[group[j]] < 2:
                owner[i] = group[j]
                count[group[j]] += 1
        for ms in group:
            result[ms] = np.sort(energies[[i for i in range(len(energies)) if owner[i] == ms]])
    return result


def second_order_energies(params: SystemParams) -> np.ndarray:
    """Six second-order energies, ascending (Hz).

    Matrix elements are the textbook |<k,l|H_perp|mS,mI>|^2 terms, organised
    as a quasi-degenerate effective Hamiltonian per electron block.
    """
    return np.sort(np.concatenate([second_order_doublets(params)[ms] for ms in MANIFOLDS]))


def nu0_prime_closed_form(params: SystemParams) -> float:
    """mu_n|B|/h + 4 sqrt(2) (mu_e/h)(Bx a_xz + By a_yz)/D_gs, as printed."""
    c = params.constants
    bx, by, _ = params.field.vector
    a = params.hyperfine.array
    return c.gamma_n * params.field.magnitude + 4.0 * math.sqrt(2.0) * c.gamma_e * (bx * a[0, 2] + by * a[1, 2]) / c.D_gs


def nu0_prime_vector_form(params: SystemParams) -> float:
    """Leading-order 0' splitting keeping the full transverse rows of the tensor.

    The nucleus sees the bare Zeeman field plus an effective term
    -(2 mu_e/(h D_gs)) (Bx alpha_x + By alpha_y), alpha_mu being tensor rows.
    """
    c = params.constants
    b = params.field.vector
    a = params.hyperfine.array
    vec = c.gamma_n * b - 2.0 * c.gamma_e * (b[0] * a[0] + b[1] * a[1]) / c.D_gs
    return float(np.linalg.norm(vec))


def enhancement_factor(params: SystemParams) -> float:
    """(alpha_perp / D_gs) (mu_e B_perp) / (mu_n |B|)."""
    mag = params.field.magnitude
    if mag == 0.0:
        raise ValueError("enhancement factor is undefined at zero field")
    c = params.constants
    return (params.hyperfine.perp / c.D_gs) * (c.mu_e * params.field.perp) / (c.mu_n * mag)


def regime_ok(params: SystemParams) -> bool:
    c = params.constants
    scale = max(c.gamma_e * params.field.magnitude, float(np.abs(params.hyperfine.array).max()))
    return c.D_gs > REGIME_FACTOR * scale


@dataclass(frozen=True)
class PerturbationReport:
    nu0_closed: float
    nu0_exact: float
    relative_error: float
    enhancement: float
    regime_ok: bool
    within_tolerance: bool
    tolerance: float
    nu0_second_order: float = math.nan
    nu0_vector_form: float = math.nan
    notes: str = ""

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def relative_error(closed: float, exact: float) -> float:
    return abs(closed - exact) / max(abs(exact), 1.0)


def validate_perturbation(params: SystemParams, tolerance: float = 0.10) -> PerturbationReport:
    """Compare the closed-form 0' precession with exact diagonalization.

    Never raises on physics problems; anything that could not be evaluated is
    NaN and explained in ``notes``.
    """
    notes = []
    closed = nu0_prime_closed_form(params)
    try:
        exact = nuclear_doublet_splitting(system_eigen(params), 0)
    except ValueError as exc:
        exact = math.nan
        notes.append(f"exact: {exc}")
    try:
        d = second_order_doublets(params)[0]
        second = float(d[1] - d[0])
    except PerturbationError as exc:
        second = math.nan
        notes.append(f"second order: {exc}")
    try:
        enh = enhancement_factor(params)
    except ValueError as exc:
        enh = math.nan
        notes.append(f"enhancement: {exc}")
    err = relative_error(closed, exact) if math.isfinite(exact) else math.nan
    return PerturbationReport(
        nu0_closed=closed,
        nu0_exact=exact,
        relative_error=err,
        enhancement=enh,
        regime_ok=regime_ok(params),
        within_tolerance=bool(math.isfinite(err) and err <= tolerance),
        tolerance=tolerance,
        nu0_second_order=second,
        nu0_vector_form=nu0_prime_vector_form(params),
        notes="; ".join(notes),
    )
