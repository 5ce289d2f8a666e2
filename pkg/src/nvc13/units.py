"""Quantity strings with explicit units, converted to SI at the boundary."""

from __future__ import annotations

import math
import re

# unit -> (dimension, SI factor)
UNITS: dict[str, tuple[str, float]] = {
    "Hz": ("frequency", 1.0),
    "kHz": ("frequency", 1e3),
    "MHz": ("frequency", 1e6),
    "GHz": ("frequency", 1e9),
    "T": ("field", 1.0),
    "mT": ("field", 1e-3),
    "uT": ("field", 1e-6),
    "µT": ("field", 1e-6),
    "G": ("field", 1e-4),
    "s": ("time", 1.0),
    "ms": ("time", 1e-3),
    "us": ("time", 1e-6),
    "µs": ("time", 1e-6),
    "ns": ("time", 1e-9),
    "rad": ("angle", 1.0),
    "deg": ("angle", math.pi / 180.0),
    "J/T": ("moment", 1.0),
    "J*s": ("action", 1.0),
    "J s": ("action", 1.0),
}

_QUANTITY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(\S.*?)?\s*$")


class UnitError(ValueError):
    """A quantity has a missing, unknown, or wrong-dimension unit."""


def parse_quantity(text: str | float | int, dimension: str, *, default_unit: str | None = None) -> float:
    """Parse ``"7 mT"`` style text into an SI float of the given dimension.

    Bare numbers are accepted only when ``default_unit`` is given, e.g. for
    hyperfine matrices whose unit is stated once for the whole block.
    """
    if isinstance(text, bool):
        raise UnitError(f"expected a {dimension} quantity, got {text!r}")
    if isinstance(text, (int, float)):
        if default_unit is None:
            raise UnitError(f"{dimension} quantity {text!r} needs an explicit unit")
        return float(text) * _factor(default_unit, dimension)
    m = _QUANTITY.match(str(text))
    if m is None:
        raise UnitError(f"cannot parse quantity {text!r}")
    value, unit = m.group(1), m.group(2)
    if unit is None:
        if default_unit is None:
            raise UnitError(f"{dimension} quantity {text!r} needs an explicit unit")
        unit = default_unit
    return float(value) * _factor(unit, dimension)


def _factor(unit: str, dimension: str) -> float:
    try:
        dim, factor = UNITS[unit]
    except KeyError:
        raise UnitError(f"unknown unit {unit!r}") from None
    if dim != dimension:
        raise UnitError(f"unit {unit!r} is a {dim}, expected a {dimension}")
    return factor


def format_quantity(value: float, unit: str) -> str:
    _, factor = UNITS[unit]
    return f"{value / factor:.12g} {unit}"
