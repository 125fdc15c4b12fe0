"""piclab: a particle-in-cell integrator laboratory.

Periodic electrostatic (1D) and magnetized (2D) PIC models with five
interchangeable particle pushers, spectral Poisson solvers for the standard
stencils, an implicit theta-weighted Maxwell field stepper, and a harness
for space-time convergence studies and runtime benchmarks.
"""

from piclab.domain import (
    EPS0,
    MU0,
    C_LIGHT,
    ConfigError,
    GridSpec,
    ParticleEnsemble,
    SimConfig,
    Species,
    larmor_frequency,
    load_config,
    plasma_frequency,
    wrap_periodic,
)

__all__ = [
    "EPS0",
    "MU0",
    "C_LIGHT",
    "ConfigError",
    "GridSpec",
    "ParticleEnsemble",
    "SimConfig",
    "Species",
    "larmor_frequency",
    "load_config",
    "plasma_frequency",
    "wrap_periodic",
]

__version__ = "0.1.0"
