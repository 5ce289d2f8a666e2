"""System parameters: physical constants, applied field, hyperfine tensor."""

from __future__ import annotations

import math
from dataclasses import dataclass
from dataclasses import field as dc_field

import numpy as np

PLANCK = 6.62607015e-34  # J s
BOLTZMANN = 1.380649e-23  # J/K

# Field magnitudes above this leave the regime where the NV zero-field
# splitting dominates the electron Zeeman energy.
MAX_FIELD_T = 0.1


class ParameterError(ValueError):
    """Raised for non-finite or out-of-range physical parameters."""


@dataclass(frozen=True)
class PhysicalConstants:
    mu_e: float = 1.9e-23  # J/T
    mu_n: float = 3.5e-27  # J/T
    h: float = PLANCK
    D_gs: float = 2.87e9  # Hz

    def __post_init__(self):
        for name in ("mu_e", "mu_n", "h", "D_gs"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ParameterError(f"constant {name} must be finite and > 0, got {v!r}")

    @property
    def gamma_e(self) -> float:
        """Electron Zeeman coefficient mu_e/h in Hz/T."""
        return self.mu_e / self.h

    @property
    def gamma_n(self) -> float:
        """Nuclear Zeeman coefficient mu_n/h in Hz/T."""
        return self.mu_n / self.h


# The printed 13C moment gives ~37 kHz at 7 mT, the quoted bare Larmor
# frequency is 5.9 kHz at the same field. Both are kept.
CONSTANT_SETS: dict[str, PhysicalConstants] = {
    "paper-constant": PhysicalConstants(),
    "paper-larmor-consistent": PhysicalConstants(mu_n=5.9e3 * PLANCK / 7e-3),
}


@dataclass(frozen=True)
class MagneticField:
    """Cartesian field in tesla; z is the NV symmetry axis."""

    bx: float = 0.0
    by: float = 0.0
    bz: float = 0.0

    def __post_init__(self):
        for name in ("bx", "by", "bz"):
            if not math.isfinite(getattr(self, name)):
                raise ParameterError(f"field component {name} is not finite")

    @classmethod
    def polar(cls, magnitude: float, theta: float, phi: float = 0.0) -> "MagneticField":
        """Field of given magnitude (T) at polar angle theta from the NV axis and azimuth phi (rad)."""
        st = math.sin(theta)
        return cls(magnitude * st * math.cos(phi), magnitude * st * math.sin(phi), magnitude * math.cos(theta))

    def to_polar(self) -> tuple[float, float, float]:
        b = self.magnitude
        if b == 0.0:
            return 0.0, 0.0, 0.0
        theta = math.atan2(math.hypot(self.bx, self.by), self.bz)
        phi = math.atan2(self.by, self.bx)
        return b, theta, phi

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.bx, self.by, self.bz], dtype=float)

    @property
    def magnitude(self) -> float:
        return math.sqrt(self.bx**2 + self.by**2 + self.bz**2)

    @property
    def perp(self) -> float:
        return math.hypot(self.bx, self.by)


@dataclass(frozen=True)
class HyperfineTensor:
    """General (not necessarily symmetric) 3x3 coupling alpha[mu][nu] in Hz.

    Row index is the electron operator S_mu, column index the nuclear I_nu.
    """

    rows: tuple[tuple[float, float, float], ...] = ((0.0,) * 3,) * 3

    def __post_init__(self):
        arr = np.asarray(self.rows, dtype=float)
        if arr.shape != (3, 3):
            raise ParameterError(f"hyperfine tensor must be 3x3, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ParameterError("hyperfine tensor has non-finite entries")
        object.__setattr__(self, "rows", tuple(tuple(float(v) for v in r) for r in arr))

    @classmethod
    def from_array(cls, arr) -> "HyperfineTensor":
        return cls(tuple(map(tuple, np.asarray(arr, dtype=float))))

    @property
    def array(self) -> np.ndarray:
        return np.array(self.rows, dtype=float)

    @property
    def perp(self) -> float:
        """sqrt(alpha_xz^2 + alpha_yz^2)."""
        return math.hypot(self.rows[0][2], self.rows[1][2])


@dataclass(frozen=True)
class SystemParams:
    constants: PhysicalConstants = dc_field(default_factory=PhysicalConstants)
    field: MagneticField = dc_field(default_factory=MagneticField)
    hyperfine: HyperfineTensor = dc_field(default_factory=HyperfineTensor)

    def __post_init__(self):
        b = self.field.magnitude
        if b > MAX_FIELD_T:
            raise ParameterError(f"|B| = {b:.4g} T exceeds the {MAX_FIELD_T} T cap of the perturbative regime")

    def replace(self, **changes) -> "SystemParams":
        from dataclasses import replace

        return replace(self, **changes)

    def to_dict(self) -> dict:
        """Plain SI dictionary; used for hashing and CSV provenance."""
        c = self.constants
        return {
            "constants": {"mu_e": c.mu_e, "mu_n": c.mu_n, "h": c.h, "D_gs": c.D_gs},
            "field": {"bx": self.field.bx, "by": self.field.by, "bz": self.field.bz},
            "hyperfine": [list(r) for r in self.hyperfine.rows],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SystemParams":
        return cls(
            constants=PhysicalConstants(**d["constants"]),
            field=MagneticField(**d["field"]),
            hyperfine=HyperfineTensor.from_array(d["hyperfine"]),
        )
