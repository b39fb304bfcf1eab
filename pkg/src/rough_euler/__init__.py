"""2D incompressible Euler equations with rough transport noise on the torus."""

from .rough_path import (GeometricRoughPathGrid, PiecewiseLinearPath, brownian_dyadic_path,
                         canonical_lift, lift_smooth)
from .solver import RunResult, SimState, SolverConfig, run, step
from .spectral import ScalarField, SpectralGrid, VectorField, spectral_grid

__all__ = [
    "GeometricRoughPathGrid", "PiecewiseLinearPath", "brownian_dyadic_path", "canonical_lift",
    "lift_smooth", "RunResult", "SimState", "SolverConfig", "run", "step", "ScalarField",
    "SpectralGrid", "VectorField", "spectral_grid",
]
__version__ = "0.1.0"
