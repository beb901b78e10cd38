"""Lattice SU(2) Yang-Mills gradient flow with energy-identity diagnostics.

Modules:
    liealg      -- quaternion SU(2) and su(2) primitives
    lattice     -- periodic 4D geometry, links, clover curvature, forces
    flow        -- gradient-flow time integrators and initial data
    diagnostics -- stress-energy, weighted energy identity, concentration
    radialheat  -- annulus radial heat solver and comparison-function bounds
    cli         -- reproducible experiment runner
"""

__version__ = "0.1.0"

from .lattice import (  # noqa: F401
    GaugeField,
    LatticeGeometry,
    clover_F,
    dstar_F,
    energy,
    read_checkpoint,
    wilson_energy,
    write_checkpoint,
)
from .flow import (  # noqa: F401
    FlowState,
    FlowTrajectory,
    IntegratorConfig,
    make_initial,
    run,
    step,
)
