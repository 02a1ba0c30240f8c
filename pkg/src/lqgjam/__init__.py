"""Finite-horizon LQG game between a controller that pays to observe and an
attacker that pays to jam the observation."""

from .control_synthesis import ConcavityViolation, RiccatiSolution, backward_riccati, controls_at
from .decisions import (
    NoPureNash,
    StrategyTree,
    ValueBreakdown,
    backward_enumerate,
    evaluate_value,
    policy_iteration,
    stage_equilibrium,
    threshold_T,
)
from .model import GameSpec, Gaussian, InfoStructure, KnownExactly, SpecError, load_spec, parse_spec
from .simulation import monte_carlo, rollout
from .solver import Solution, solve

__version__ = "0.1.0"

__all__ = [
    "ConcavityViolation",
    "GameSpec",
    "Gaussian",
    "InfoStructure",
    "KnownExactly",
    "NoPureNash",
    "RiccatiSolution",
    "Solution",
    "SpecError",
    "StrategyTree",
    "ValueBreakdown",
    "backward_enumerate",
    "backward_riccati",
    "controls_at",
    "evaluate_value",
    "load_spec",
    "monte_carlo",
    "parse_spec",
    "policy_iteration",
    "rollout",
    "solve",
    "stage_equilibrium",
    "threshold_T",
]
