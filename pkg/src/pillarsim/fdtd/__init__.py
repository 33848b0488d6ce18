"""Time-domain Maxwell solvers (3D primary, 2D for validation)."""
from .core import (
    BoxResult,
    GaussianPulse,
    PlaneResult,
    RunResult,
    Simulation3D,
    homogeneous_grid,
)
from .core2d import BoxResult2D, LineResult, RunResult2D, Simulation2D
from .cpml import AxisPml, CpmlSpec, build_axis_pml, courant_dt

__all__ = [
    "AxisPml",
    "BoxResult",
    "BoxResult2D",
    "CpmlSpec",
    "GaussianPulse",
    "LineResult",
    "PlaneResult",
    "RunResult",
    "RunResult2D",
    "Simulation2D",
    "Simulation3D",
    "build_axis_pml",
    "courant_dt",
    "homogeneous_grid",
    "init_simulation",
]


def init_simulation(grid, courant_factor: float = 0.5, wavelengths_nm=(650.0, 700.0, 750.0, 800.0)):
    """Convenience constructor mirroring the solver entry point by name."""
    return Simulation3D(grid, wavelengths_nm=wavelengths_nm, courant=courant_factor)
