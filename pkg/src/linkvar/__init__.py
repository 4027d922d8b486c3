"""Numerical linking for strongly indefinite singular Schrodinger problems in cylindrical symmetry."""

from .errors import *  # noqa: F401,F403
from .functional import FunctionalContext, J, dJ, gradX
from .grid import Grid, Potential, ProblemSpec, assemble_operator, build_grid
from .nonlinearity import NonlinearitySpec, verify_axioms
from .spectral import SpectralSplit, eigendecompose

__version__ = "0.1.0"

__all__ = [
    "FunctionalContext", "J", "dJ", "gradX", "Grid", "Potential", "ProblemSpec", "assemble_operator",
    "build_grid", "NonlinearitySpec", "verify_axioms", "SpectralSplit", "eigendecompose", "__version__",
]
