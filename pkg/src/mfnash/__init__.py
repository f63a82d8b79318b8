"""Two-player linear-quadratic mean-field games with partial information.

Riccati feedback, Monte Carlo simulation, cost oracles, Nash certificates and
a regression-based adjoint solver.
"""

__version__ = "0.1.0"

from .model import GeneralGameSpec, LqGameSpec, TimeGrid, reference_spec, validate_lq, zero_cost_spec
from .riccati import BlowUp, GainTables, RiccatiTables, feedback_gains, solve_riccati
from .sde import NoisePlan, equilibrium_policy, generate_noise, simulate_state
from .cost import CostEstimate, estimate_cost_mc, exact_cost_moments, simulate_cost
from .nash_verify import NashReport, deviation_battery, verify_nash
from .fbsde import SolverConfig, check_against_riccati, solve_lq_fbsde

__all__ = [
    "GeneralGameSpec", "LqGameSpec", "TimeGrid", "reference_spec", "validate_lq", "zero_cost_spec",
    "BlowUp", "GainTables", "RiccatiTables", "feedback_gains", "solve_riccati",
    "NoisePlan", "equilibrium_policy", "generate_noise", "simulate_state",
    "CostEstimate", "estimate_cost_mc", "exact_cost_moments", "simulate_cost",
    "NashReport", "deviation_battery", "verify_nash",
    "SolverConfig", "check_against_riccati", "solve_lq_fbsde",
]
