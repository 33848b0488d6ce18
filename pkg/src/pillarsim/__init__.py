"""pillarsim: FDTD prediction of photon collection from diamond nanopillars.

Simulates dipole emitters embedded near the facet of tapered diamond
nanopillar waveguides, projects the transmitted field below the substrate
to the far zone, and reduces the result to collection efficiencies,
numerical-aperture curves and the photophysics figures of merit used to
compare against measured devices.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    ConfigurationError,
    ConsistencyError,
    DataError,
    FitError,
    InstabilityError,
    PillarSimError,
    PlacementError,
    SolverError,
    StabilityError,
    ValidationError,
)
