"""Conditional phase shift between two single photons in a nonlocal
chi(2) medium: closed-form phase map, overlap integrals, direct time
integration and the adiabatic (strong-conversion) approximation.
"""

__version__ = "0.1.0"

from .errors import (AccuracyError, Chi2PhaseError, ConfigurationError, ConsistencyError, DegeneracyError,
                     DomainError, OverflowDomainError, ResolutionError, StepSizeError)
from .model import (DimensionlessParams, GaussianResponse, JointSpectrum, PhysicalConfig, TabulatedResponse,
                    Velocities, dimensionless_from_physical, physical_from_dimensionless)
from .analytic import (ComplexFidelity, complex_fidelity_equal_ab, complex_fidelity_general, theta_phase,
                       final_spectrum)
from .dynamics import KGrid, JointState, evolve, fidelity_from_dynamics
from .approx import final_bc_adiabatic, gamma_rate, overlap_adiabatic

_SUBMODULES = {"errors", "numerics", "model", "analytic", "dynamics", "approx", "cli"}
__all__ = [name for name in dir() if not name.startswith("_") and name not in _SUBMODULES]
