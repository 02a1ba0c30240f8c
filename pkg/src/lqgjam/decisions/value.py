"""Additive decomposition of the equilibrium value V_0*."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence, Union

import numpy as np

from ..control_synthesis import RiccatiSolution
from ..model import GameSpec
from .stage import follow_sequence
from .tree import StrategyTree


@dataclass(frozen=True)
class ValueBreakdown:
    initial: float       # E[x_0' L_0 x_0]
    noise: float         # sum of Tr(Sigma_s C' L_{n+1} C)
    estimation: float    # sum of Tr(P_n phi_n) along the path
    observation: float   # sum of i_d Od
    jamming: float       # minus the sum of i_a Oa
    total: float

    def as_dict(self) -> dict:
        return asdict(self)


Plan = Union[StrategyTree, Sequence[tuple[int, int]]]


def plan_decisions(spec: GameSpec, plan: Plan) -> list[tuple[int, int]]:
    if isinstance(plan, StrategyTree):
        return [(s.i_d, s.i_a) for s in plan.on_path(spec.observation_rule)]
    return [tuple(int(b) for b in pair) for pair in plan]


def evaluate_value(spec: GameSpec, riccati: RiccatiSolution, plan: Plan) -> ValueBreakdown:
    decisions = plan_decisions(spec, plan)
    if len(decisions) != spec.horizon:
        raise ValueError(f"expected {spec.horizon} decisions, got {len(decisions)}")
    L, phi = riccati.L, riccati.phi
    xbar = spec.x0_mean
    initial = float(xbar @ L[0] @ xbar + np.trace(L[0] @ spec.sigma_0))
    CSC = spec.C @ spec.sigma_s @ spec.C.T
    noise = float(sum(np.trace(CSC @ L[n + 1]) for n in range(spec.horizon)))
    Ps = follow_sequence(spec, decisions)
    estimation = float(sum(np.trace(P @ phi[n]) for n, P in enumerate(Ps)))
    observation = float(sum(d * spec.Od[n] for n, (d, _) in enumerate(decisions)))
    jamming = -float(sum(a * spec.Oa[n] for n, (_, a) in enumerate(decisions)))
    total = initial + noise + estimation + observation + jamming
    return ValueBreakdown(initial, noise, estimation, observation, jamming, total)
