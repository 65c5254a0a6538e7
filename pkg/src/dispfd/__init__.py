"""Dispersion-optimized compact finite-difference schemes: design, analysis and verification."""

from .banded import BandedMatrix, CyclicBandedMatrix, SingularMatrixError
from .fields import Field1D, Field2D, Grid1D, Grid2D
from .schemes import CATALOG, InteriorScheme, SchemeCatalog

__version__ = "0.1.0"

__all__ = [
    "BandedMatrix",
    "CyclicBandedMatrix",
    "SingularMatrixError",
    "Field1D",
    "Field2D",
    "Grid1D",
    "Grid2D",
    "CATALOG",
    "InteriorScheme",
    "SchemeCatalog",
]
