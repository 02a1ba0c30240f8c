"""Policy iteration over fixed observe/jam sequences.

A candidate pair of sequences is evaluated along the deterministic covariance
trajectory it induces. Each stage game is then re-solved against the value
of continuing with the candidate, walking forward along the trajectory that
the new decisions produce. The loop stops at a fixed point, at ``max_iters``
or when a previously visited candidate comes back (a cycle).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..control_synthesis import RiccatiSolution
from ..estimation import stage_covariance
from ..model import GameSpec, KnownExactly
from .stage import InvalidInitialPolicy, Regime, stage_cost, stage_equilibrium
from .tree import NoPureNashError

Decisions = tuple[tuple[int, int], ...]


@dataclass(frozen=True)
class PolicyIterationResult:
    Id: tuple[int, ...]
    Ia: tuple[int, ...]
    values: np.ndarray      # values[k] = J_k at the on-path decision point, values[N] = 0
    converged: bool
    iterations: int
    cycled: bool = False

    @property
    def decisions(self) -> Decisions:
        return tuple(zip(self.Id, self.Ia))


def sequence_value(
    spec: GameSpec,
    riccati: RiccatiSolution,
    decisions: Sequence[tuple[int, int]],
    k: int,
    P_prev: Optional[np.ndarray],
) -> float:
    """Cost-to-go from stage k when stages k..N-1 follow ``decisions``."""
    costs = []
    P = P_prev
    for n in range(k, spec.horizon):
        i_d, i_a = decisions[n]
        P = stage_covariance(P, n, spec.observation_rule(i_d, i_a), spec)
        costs.append(stage_cost(P, n, i_d, i_a, spec, riccati))
    # accumulate from the end so sums associate like the backward recursion
    J = 0.0
    for c in reversed(costs):
        J = c + J
    return J


def _check_initial(spec: GameSpec, decisions: Decisions) -> None:
    if len(decisions) != spec.horizon:
        raise InvalidInitialPolicy(f"expected {spec.horizon} stages, got {len(decisions)}")
    for k, pair in enumerate(decisions):
        if pair not in ((0, 0), (1, 0), (1, 1), (0, 1)):
            raise InvalidInitialPolicy(f"stage {k}: decision {pair} is not a pair of bits")
        if pair == (0, 1):
            raise InvalidInitialPolicy(f"stage {k}: initial policy may not contain (0, 1)")
    if isinstance(spec.initial_state, KnownExactly) and decisions[0] != (0, 0):
        raise InvalidInitialPolicy("stage 0 must be (0, 0) when the initial state is known exactly")


def improve(spec: GameSpec, riccati: RiccatiSolution, decisions: Decisions) -> tuple[Decisions, list[float]]:
    """One update sweep; returns the new decisions and their stage-game values."""
    N = spec.horizon
    new, values = [], []
    P = None
    for k in range(N):
        if k + 1 < N:
            def J_next(Pk, k=k):
                return sequence_value(spec, riccati, decisions, k + 1, Pk)
        else:
            def J_next(Pk):
                return 0.0
        d = stage_equilibrium(P, k, J_next, spec, riccati)
        if d.regime is Regime.NO_PURE_NASH:
            raise NoPureNashError(k, d.threshold)
        new.append(d.pair)
        values.append(d.value)
        P = stage_covariance(P, k, spec.observation_rule(*d.pair), spec)
    return tuple(new), values


def path_values(spec: GameSpec, riccati: RiccatiSolution, decisions: Decisions) -> np.ndarray:
    N = spec.horizon
    out = np.zeros(N + 1)
    P = None
    for k in range(N):
        out[k] = sequence_value(spec, riccati, decisions, k, P)
        P = stage_covariance(P, k, spec.observation_rule(*decisions[k]), spec)
    return out


def policy_iteration(
    spec: GameSpec,
    riccati: RiccatiSolution,
    init_Id: Optional[Sequence[int]] = None,
    init_Ia: Optional[Sequence[int]] = None,
    max_iters: int = 100,
) -> PolicyIterationResult:
    N = spec.horizon
    Id = list(init_Id) if init_Id is not None else [0] * N
    Ia = list(init_Ia) if init_Ia is not None else [0] * N
    if len(Id) != len(Ia):
        raise InvalidInitialPolicy("init_Id and init_Ia differ in length")
    current: Decisions = tuple((int(d), int(a)) for d, a in zip(Id, Ia))
    _check_initial(spec, current)

    seen = {current}
    converged = cycled = False
    it = 0
    while it < max_iters:
        it += 1
        new, _ = improve(spec, riccati, current)
        if new == current:
            converged = True
            break
        current = new
        if current in seen:
            cycled = True
            break
        seen.add(current)

    values = path_values(spec, riccati, current)
    return PolicyIterationResult(
        Id=tuple(d for d, _ in current),
        Ia=tuple(a for _, a in current),
        values=values,
        converged=converged,
        iterations=it,
        cycled=cycled,
    )
