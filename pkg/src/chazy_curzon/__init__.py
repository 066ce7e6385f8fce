"""Geodesic dynamics of the Chazy-Curzon space-time in Weyl coordinates."""
from .dynamics import (
    EquilibriumRecord,
    OrbitConstants,
    PhasePoint,
    equilibrium_closed_form,
    equilibrium_solve,
    f_hamiltonian,
    f_vector_field,
    v_potential,
)
from .metric import MetricParams

__version__ = "0.1.0"

__all__ = [
    "EquilibriumRecord",
    "MetricParams",
    "OrbitConstants",
    "PhasePoint",
    "equilibrium_closed_form",
    "equilibrium_solve",
    "f_hamiltonian",
    "f_vector_field",
    "v_potential",
]
