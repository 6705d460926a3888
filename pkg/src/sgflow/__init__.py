"""Solver-generated turbulence data and self-guided diffusion reconstruction."""

from sgflow.errors import (
    FormatError,
    InvalidArgumentError,
    NumericalBlowupError,
    NumericalError,
    PayloadLengthError,
)

__version__ = "0.1.0"

__all__ = [
    "FormatError",
    "InvalidArgumentError",
    "NumericalBlowupError",
    "NumericalError",
    "PayloadLengthError",
]
