"""NV electron / 13C nuclear spin simulator."""

__version__ = "0.1.0"

from .params import CONSTANT_SETS, HyperfineTensor, MagneticField, PhysicalConstants, SystemParams  # noqa: E402
from .presets import PRESETS, preset  # noqa: E402

__all__ = [
    "CONSTANT_SETS",
    "HyperfineTensor",
    "MagneticField",
    "PRESETS",
    "PhysicalConstants",
    "SystemParams",
    "preset",
    "__version__",
]
