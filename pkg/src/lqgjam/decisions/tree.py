"""Covariance tree and exact backward induction over it.

A node at decision stage k (1 <= k <= N) carries P_{k-1}, the error
covariance left by outcomes h_0..h_{k-1}. Its children are the nodes reached
by h_k = 0 and h_k = 1, and it stores the stage-k equilibrium and J*_k(P_{k-1}).
Stage-N nodes are leaves with J = 0. The stage-0 game is played on the prior
and lives in ``StrategyTree.initial`` rather than in the node table.

Nodes at the same stage whose covariances are byte-identical are merged, which
is what collapses the perfect-observation tree to k+1 nodes per stage.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from ..control_synthesis import RiccatiSolution
from ..estimation import stage_covariance
from ..model import GameSpec, KnownExactly
from .stage import NoPureNash, Regime, StageDecision, stage_equilibrium, zero_value

TREE_FORMAT = "lqgjam.strategy_tree/1"
DEFAULT_MAX_NODES = 1 << 14


class TreeTooLarge(RuntimeError):
    pass


def cov_key(P: np.ndarray) -> bytes:
    # adding 0.0 folds -0.0 into +0.0 so equal matrices hash equally
    return np.ascontiguousarray(P + 0.0).tobytes()


@dataclass
class CovarianceNode:
    id: int
    stage: int
    P: np.ndarray
    history: str
    children: dict = field(default_factory=dict)
    decision: Optional[tuple[int, int]] = None
    regime: Optional[str] = None
    value: float = 0.0
    threshold: Optional[float] = None


@dataclass
class InitialDecision:
    prior: np.ndarray
    decision: Optional[tuple[int, int]]
    regime: str
    value: float
    threshold: float
    children: dict = field(default_factory=dict)


@dataclass(frozen=True)
class PathStep:
    stage: int
    i_d: int
    i_a: int
    h: int
    P: np.ndarray       # P_stage, after the stage's measurement step
    value: float        # J*_stage at the decision point


@dataclass
class StrategyTree:
    horizon: int
    initial: InitialDecision
    nodes: list
    method: str = "enumerate"
    complete: bool = True

    @property
    def roots(self) -> list[CovarianceNode]:
        return [self.nodes[i] for i in self.initial.children.values()]

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    def stage_nodes(self, k: int) -> list[CovarianceNode]:
        return [n for n in self.nodes if n.stage == k]

    def value_samples(self, k: int) -> list[tuple[np.ndarray, float]]:
        """Stored (P_{k-1}, J*_k) pairs; for k = 0 the prior and the game value."""
        if k == 0:
            return [(self.initial.prior, self.initial.value)]
        return [(n.P, n.value) for n in self.stage_nodes(k)]

    def decision_after(self, history: Sequence[int]) -> tuple[int, int]:
        """Decision at stage len(history) given outcomes h_0..h_{k-1}."""
        if not history:
            return self.initial.decision
        node = self.nodes[self.initial.children[history[0]]]
        for h in history[1:]:
            node = self.nodes[node.children[h]]
        return node.decision

    def on_path(self, rule) -> list[PathStep]:
        steps = []
        decision, value, children = self.initial.decision, self.initial.value, self.initial.children
        for k in range(self.horizon):
            if decision is None:
                raise NoPureNash(k, float("nan"))
            h = rule(*decision)
            node = self.nodes[children[h]]
            steps.append(PathStep(k, decision[0], decision[1], h, node.P, value))
            decision, value, children = node.decision, node.value, node.children
        return steps

    def to_dict(self) -> dict:
        def mat(P):
            return np.asarray(P).tolist()

        return {
            "format": TREE_FORMAT,
            "horizon": self.horizon,
            "method": self.method,
            "complete": self.complete,
            "initial": {
                "prior": mat(self.initial.prior),
                "decision": list(self.initial.decision) if self.initial.decision else None,
                "regime": self.initial.regime,
                "value": self.initial.value,
                "threshold": self.initial.threshold,
                "children": {str(h): i for h, i in self.initial.children.items()},
            },
            "nodes": [
                {
                    "id": n.id,
                    "stage": n.stage,
                    "history": n.history,
                    "P": mat(n.P),
                    "children": {str(h): i for h, i in n.children.items()},
                    "decision": list(n.decision) if n.decision else None,
                    "regime": n.regime,
                    "value": n.value,
                    "threshold": n.threshold,
                }
                for n in self.nodes
            ],
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "StrategyTree":
        if raw.get("format") != TREE_FORMAT:
            raise ValueError(f"unsupported tree format {raw.get('format')!r}")

        def pair(d):
            return tuple(d) if d is not None else None

        ini = raw["initial"]
        initial = InitialDecision(
            prior=np.array(ini["prior"], dtype=float),
            decision=pair(ini["decision"]),
            regime=ini["regime"],
            value=ini["value"],
            threshold=ini["threshold"],
            children={int(h): i for h, i in ini["children"].items()},
        )
        nodes = [
            CovarianceNode(
                id=n["id"],
                stage=n["stage"],
                P=np.array(n["P"], dtype=float),
                history=n["history"],
                children={int(h): i for h, i in n["children"].items()},
                decision=pair(n["decision"]),
                regime=n["regime"],
                value=n["value"],
                threshold=n["threshold"],
            )
            for n in raw["nodes"]
        ]
        return cls(raw["horizon"], initial, nodes, raw["method"], raw["complete"])

    def dump(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "StrategyTree":
        return cls.from_dict(json.loads(Path(path).read_text()))


class NoPureNashError(NoPureNash):
    """Raised by the global solvers when a reachable stage game has no pure equilibrium."""


def initial_outcomes(spec: GameSpec) -> tuple[int, ...]:
    return (0,) if isinstance(spec.initial_state, KnownExactly) else (0, 1)


def node_count_bound(spec: GameSpec) -> int:
    """Upper bound on the node table size for ``backward_enumerate``."""
    N = spec.horizon
    roots = len(initial_outcomes(spec))
    if spec.perfect_observation:
        return N * (N + 1) // 2 + N
    return roots * ((1 << N) - 1)


def _build_levels(spec: GameSpec, max_nodes: int):
    N = spec.horizon
    nodes: list[CovarianceNode] = []
    levels: list[dict] = [dict() for _ in range(N + 1)]

    def intern(k: int, P: np.ndarray, history: str) -> int:
        key = cov_key(P)
        found = levels[k].get(key)
        if found is not None:
            return found.id
        if len(nodes) >= max_nodes:
            raise TreeTooLarge(f"covariance tree exceeds {max_nodes} nodes")
        node = CovarianceNode(len(nodes), k, P, history)
        nodes.append(node)
        levels[k][key] = node
        return node.id

    roots = {h: intern(1, stage_covariance(None, 0, h, spec), str(h)) for h in initial_outcomes(spec)}
    for k in range(1, N):
        for node in list(levels[k].values()):
            for h in (0, 1):
                P = stage_covariance(node.P, k, h, spec)
                node.children[h] = intern(k + 1, P, node.history + str(h))
    return nodes, levels, roots


def _lookup(level: dict):
    def J(P: np.ndarray) -> float:
        return level[cov_key(P)].value

    return J


def _record(decision: StageDecision, history: str) -> StageDecision:
    if decision.regime is Regime.NO_PURE_NASH:
        raise NoPureNashError(decision.stage, decision.threshold, history)
    return decision


def backward_enumerate(
    spec: GameSpec,
    riccati: RiccatiSolution,
    max_nodes: int = DEFAULT_MAX_NODES,
) -> StrategyTree:
    N = spec.horizon
    nodes, levels, roots = _build_levels(spec, max_nodes)
    for k in range(N - 1, 0, -1):
        J_next = _lookup(levels[k + 1]) if k + 1 < N else zero_value
        for node in levels[k].values():
            d = _record(stage_equilibrium(node.P, k, J_next, spec, riccati), node.history)
            node.decision, node.regime = d.pair, d.regime.value
            node.value, node.threshold = d.value, d.threshold
    J_next = _lookup(levels[1]) if N > 1 else zero_value
    d0 = _record(stage_equilibrium(None, 0, J_next, spec, riccati), "")
    initial = InitialDecision(spec.sigma_0, d0.pair, d0.regime.value, d0.value, d0.threshold, roots)
    return StrategyTree(N, initial, nodes, "enumerate", True)


def path_tree(
    spec: GameSpec,
    decisions: Sequence[tuple[int, int]],
    values: Sequence[float],
    method: str = "policy-iteration",
) -> StrategyTree:
    """A tree holding only the on-path branch of a fixed decision sequence.

    ``values[k]`` is the value at the stage-k decision point.
    """
    N = spec.horizon
    nodes: list[CovarianceNode] = []
    P = None
    history = ""
    children_of_prev: dict = {}
    initial = None
    for k in range(N):
        i_d, i_a = decisions[k]
        h = spec.observation_rule(i_d, i_a)
        P = stage_covariance(P, k, h, spec)
        history += str(h)
        node = CovarianceNode(len(nodes), k + 1, P, history)
        if k + 1 < N:
            node.decision = tuple(decisions[k + 1])
            node.regime = Regime.EQUILIBRIUM.value
            node.value = float(values[k + 1])
        nodes.append(node)
        if initial is None:
            forced = k == 0 and isinstance(spec.initial_state, KnownExactly)
            regime = Regime.FORCED if forced else Regime.EQUILIBRIUM
            initial = InitialDecision(spec.sigma_0, (i_d, i_a), regime.value, float(values[0]), None, {h: node.id})
        else:
            children_of_prev[h] = node.id
        children_of_prev = node.children
    return StrategyTree(N, initial, nodes, method, False)
