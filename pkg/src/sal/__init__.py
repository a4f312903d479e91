"""Numerical laboratory for symmetric self-attention dynamics on the unit sphere."""

__version__ = "0.1.0"

from .dynamics import Configuration, attention_weights, energy, integrate, vector_field
from .errors import NumericError, ValidationError
from .spectral import Spectrum, decompose_symmetric, from_diagonal, to_ambient, to_modal

__all__ = [
    "Configuration",
    "NumericError",
    "Spectrum",
    "ValidationError",
    "attention_weights",
    "decompose_symmetric",
    "energy",
    "from_diagonal",
    "integrate",
    "to_ambient",
    "to_modal",
    "vector_field",
]
