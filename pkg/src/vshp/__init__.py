"""Variable-speed hydropower plant simulation and small-signal analysis."""

from .core import PenstockMode, PlantParams, default_params, load_params
from .plant import PlantInputs, TrimResult, assemble, trim
from .turbines import ModelKind

__version__ = "0.1.0"

__all__ = [
    "ModelKind", "PenstockMode", "PlantInputs", "PlantParams", "TrimResult",
    "assemble", "default_params", "load_params", "trim",
]
