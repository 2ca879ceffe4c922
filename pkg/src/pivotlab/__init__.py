"""Exact policy iteration and simplex pivoting on the B_n and D_n lower-bound families."""

__version__ = "0.1.0"

from .mdp import (  # noqa: E402
    Edge,
    Mdp,
    Policy,
    Rational,
    Vertex,
    apply_switch,
    improving_switches,
    is_weak_unichain,
    reduced_cost,
    solve_values,
    value_sum,
)
from .engine import PivotRule, Trace, run  # noqa: E402
from .constructions import (  # noqa: E402
    build_B,
    build_D,
    canonical_policy,
    optimal_policy_B,
    optimal_policy_D,
    twin_policy,
)
from .lp import build_flux_lp, simplex_run  # noqa: E402

__all__ = [
    "Edge", "Mdp", "Policy", "Rational", "Vertex", "apply_switch", "improving_switches",
    "is_weak_unichain", "reduced_cost", "solve_values", "value_sum", "PivotRule", "Trace", "run",
    "build_B", "build_D", "canonical_policy", "optimal_policy_B", "optimal_policy_D", "twin_policy",
    "build_flux_lp", "simplex_run",
]
