"""shocklab: a numerical laboratory for self-similar shock formation in
azimuthal compressible flow.

The package evolves Riemann-invariant fields in a modulated self-similar
frame, extracts origin derivatives through a least-squares jet, and shoots
over two initial-data parameters to land on the unstable blow-up profile.
"""

from .core import (
    FieldState,
    Frame,
    Grid,
    GridError,
    ModulationState,
    ParameterError,
    Params,
    QVector,
    SolverFailure,
    StencilSet,
    derivative_at_zero,
    make_frame,
    make_grid,
    make_params,
    make_stencils,
    weighted_sup,
)

__version__ = "0.1.0"

__all__ = [
    "FieldState",
    "Frame",
    "Grid",
    "GridError",
    "ModulationState",
    "ParameterError",
    "Params",
    "QVector",
    "SolverFailure",
    "StencilSet",
    "derivative_at_zero",
    "make_frame",
    "make_grid",
    "make_params",
    "make_stencils",
    "weighted_sup",
    "__version__",
]
