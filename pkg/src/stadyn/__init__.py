"""Dynamical-invariant engineering of shortcuts to adiabaticity (hbar = m = 1)."""
from .invariant import VerificationReport, eigentrack, invariant_residual, lr_phase, solve_fields
from .operators import BasisSet, commutator, gell_mann_basis, pauli_basis, structure_constants
from .propagate import TimeGrid, unitary_propagate

__version__ = "0.1.0"

__all__ = [
    "BasisSet", "TimeGrid", "VerificationReport", "commutator", "eigentrack", "gell_mann_basis",
    "invariant_residual", "lr_phase", "pauli_basis", "solve_fields", "structure_constants",
    "unitary_propagate",
]
