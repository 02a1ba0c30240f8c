"""One-call solve: Riccati pass, observe/jam strategy, value breakdown."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .control_synthesis import RiccatiSolution, backward_riccati
from .decisions import (
    StrategyTree,
    ValueBreakdown,
    backward_enumerate,
    evaluate_value,
    node_count_bound,
    path_tree,
    policy_iteration,
)
from .decisions.tree import DEFAULT_MAX_NODES
from .model import GameSpec, KnownExactly

METHODS = ("auto", "enumerate", "policy-iteration")
# starting sequences for policy iteration: nobody acts, or observe everywhere
PI_STARTS = ("idle", "observe")


@dataclass(frozen=True)
class Solution:
    spec: GameSpec
    riccati: RiccatiSolution
    tree: StrategyTree
    value: ValueBreakdown
    method: str
    converged: bool = True
    iterations: int = 0

    @property
    def decisions(self) -> list[tuple[int, int]]:
        return [(s.i_d, s.i_a) for s in self.tree.on_path(self.spec.observation_rule)]


def choose_method(spec: GameSpec, max_nodes: int = DEFAULT_MAX_NODES) -> str:
    return "enumerate" if node_count_bound(spec) <= max_nodes else "policy-iteration"


def initial_sequences(spec: GameSpec, start: str) -> tuple[list[int], list[int]]:
    if start not in PI_STARTS:
        raise ValueError(f"unknown policy-iteration start {start!r}; expected one of {PI_STARTS}")
    Id = [0 if start == "idle" else 1] * spec.horizon
    if isinstance(spec.initial_state, KnownExactly):
        Id[0] = 0
    return Id, [0] * spec.horizon


def solve(
    spec: GameSpec,
    method: str = "auto",
    max_nodes: int = DEFAULT_MAX_NODES,
    max_iters: int = 100,
    riccati: Optional[RiccatiSolution] = None,
    pi_start: str = "idle",
) -> Solution:
    """Solve a game spec.

    ``auto`` enumerates the covariance tree when it has at most ``max_nodes``
    nodes and falls back to policy iteration (on-path strategy only) otherwise.
    Policy iteration can stop at different fixed points depending on
    ``pi_start``; only enumeration is guaranteed subgame perfect.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    init_Id, init_Ia = initial_sequences(spec, pi_start)
    if riccati is None:
        riccati = backward_riccati(spec)
    if method == "auto":
        method = choose_method(spec, max_nodes)
    if method == "enumerate":
        tree = backward_enumerate(spec, riccati, max_nodes=max_nodes)
        return Solution(spec, riccati, tree, evaluate_value(spec, riccati, tree), method)
    result = policy_iteration(spec, riccati, init_Id, init_Ia, max_iters=max_iters)
    tree = path_tree(spec, result.decisions, result.values)
    return Solution(
        spec, riccati, tree, evaluate_value(spec, riccati, result.decisions), method,
        converged=result.converged, iterations=result.iterations,
    )
