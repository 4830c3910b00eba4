"""Numerical tools for Tonelli Hamiltonians on the cotangent bundle of T^n."""

from .hamiltonians import (CATALOGUE_VERSION, CotangentState, HamiltonianModel,
                           LiftedState, build, legendre, inverse_legendre)
from .integrators import IntegratorSpec, flow, tangent_flow, vector_field

__version__ = "0.1.0"
