from .policy_iteration import PolicyIterationResult, policy_iteration, sequence_value
from .stage import (
    InvalidInitialPolicy,
    NoPureNash,
    Regime,
    StageDecision,
    StageGame,
    follow_sequence,
    stage_equilibrium,
    stage_game,
    threshold_T,
)
from .tree import (
    CovarianceNode,
    NoPureNashError,
    StrategyTree,
    TreeTooLarge,
    backward_enumerate,
    node_count_bound,
    path_tree,
)
from .value import ValueBreakdown, evaluate_value

__all__ = [
    "CovarianceNode",
    "InvalidInitialPolicy",
    "NoPureNash",
    "NoPureNashError",
    "PolicyIterationResult",
    "Regime",
    "StageDecision",
    "StageGame",
    "StrategyTree",
    "TreeTooLarge",
    "ValueBreakdown",
    "backward_enumerate",
    "evaluate_value",
    "follow_sequence",
    "node_count_bound",
    "path_tree",
    "policy_iteration",
    "sequence_value",
    "stage_equilibrium",
    "stage_game",
    "threshold_T",
]
