"""Discrete minimizers and cusp analysis for the degenerate one-phase functional
``J_Q(u) = int |grad u|^2 + Q^2 chi_{u>0}`` with ``Q = |y - line_y|**gamma``."""
from .energy import EnergyReport, dirichlet_energy, total_energy, volume_energy
from .grid import Grid, PositivitySet, ScalarField, Weight, positivity_set
from .kernels import BACKEND
from .solver import SolveConfig, SolveResult, brute_force_oracle, harmonic_solve, local_minimize

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "EnergyReport", "Grid", "PositivitySet", "ScalarField", "SolveConfig", "SolveResult", "Weight",
    "brute_force_oracle", "dirichlet_energy", "harmonic_solve", "local_minimize", "positivity_set",
    "total_energy", "volume_energy",
]
