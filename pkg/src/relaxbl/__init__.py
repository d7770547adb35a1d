"""Relaxation approximations of one-dimensional balance laws with a global source term."""

__version__ = "0.1.0"

from .systems import SystemDefinition, build_system, make_combustion, make_elasticity, make_linear_reaction
from .hypotheses import RelaxationMatrix, check_all, suggest_A
from .solver import Grid1D, RelaxationField, SolverConfig, SolutionTrace, run, init_well_prepared
from .equilibrium import EquilibriumTrace, manufactured_forcing, solve_balance_law
from .functionals import FunctionalTrace, lyapunov_G, phi, psi
from .harness import ConvergenceTable, Scenario, dx_sweep, eps_sweep, fit_rate, stability_report

__all__ = [
    "SystemDefinition", "build_system", "make_combustion", "make_elasticity", "make_linear_reaction",
    "RelaxationMatrix", "check_all", "suggest_A",
    "Grid1D", "RelaxationField", "SolverConfig", "SolutionTrace", "run", "init_well_prepared",
    "EquilibriumTrace", "manufactured_forcing", "solve_balance_law",
    "FunctionalTrace", "lyapunov_G", "phi", "psi",
    "ConvergenceTable", "Scenario", "dx_sweep", "eps_sweep", "fit_rate", "stability_report",
]
