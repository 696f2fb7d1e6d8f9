"""Quantum bouncer and absorbing-slit transmission models.

Submodules: :mod:`~qbounce.airy` (Airy function and zeros),
:mod:`~qbounce.bouncer` (stationary states), :mod:`~qbounce.slitmodels` and
:mod:`~qbounce.estimators` (analytic transmission curves and fits),
:mod:`~qbounce.montecarlo` (classical transport), :mod:`~qbounce.tdse`
(wave-packet propagation) and :mod:`~qbounce.cli`.
"""

__version__ = "0.1.0"

from .airy import airy_ai, airy_ai_prime, airy_zero, airy_zeros
from .bouncer import (
    PhysicalConstants,
    classical_density,
    density_profile,
    eigenstate,
    eigenstates,
    grav_scale,
    uncertainty_bound,
    wavefunction,
)
from .estimators import (
    ClassicalTransmission,
    ModeSumTransmission,
    SemiclassicalTransmission,
    StepwiseTransmission,
    fit_transmission,
)
from .exceptions import ConfigError, ConvergenceError, DomainError, QBounceError
from .montecarlo import MCConfig, SlitGeometry, run_transmission_scan, simulate
from .slitmodels import (
    AbsorberModel,
    BeamSpec,
    TransmissionCurve,
    classical_transmission,
    modesum_transmission,
    mode_tail,
    semiclassical_lowest_level,
    stepwise_transmission,
    survival_probability,
)
from .tdse import GridSpec, propagate_transit, tdse_transmission_scan

__all__ = [name for name in dir() if not name.startswith("_")]
