"""The 2x2 observe/jam game played at a single stage.

Given the previous error covariance, the four pure pairs (i_d, i_a) lead to
one of two covariances (measurement received or not). Each cell's payoff is
the stage cost ``Tr(P_k phi_k) + i_d Od_k - i_a Oa_k`` plus the continuation
value at the resulting covariance. The defender minimizes, the attacker
maximizes.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from ..control_synthesis import RiccatiSolution
from ..estimation import information_gain, measurement_update, prior_covariance, stage_covariance
from ..model import DEFAULT_RULE, GameSpec, InfoStructure, KnownExactly

ValueFunction = Callable[[np.ndarray], float]
PAIRS = ((0, 0), (1, 0), (0, 1), (1, 1))


class Regime(str, enum.Enum):
    EQUILIBRIUM = "equilibrium"
    FORCED = "forced"
    NO_PURE_NASH = "no_pure_nash"


class NoPureNash(RuntimeError):
    """Simultaneous-move stage game without a pure-strategy equilibrium."""

    def __init__(self, stage: int, threshold: float, history: Optional[str] = None):
        self.stage = stage
        self.threshold = threshold
        self.history = history
        where = f" (history {history})" if history is not None else ""
        super().__init__(
            f"stage {stage}{where}: no pure Nash equilibrium "
            f"(both observation and jamming costs below threshold {threshold:.6g})"
        )


class InvalidInitialPolicy(ValueError):
    pass


def zero_value(P: np.ndarray) -> float:
    return 0.0


def stage_cost(P: np.ndarray, k: int, i_d: int, i_a: int, spec: GameSpec, riccati: RiccatiSolution) -> float:
    return float(np.trace(P @ riccati.phi[k])) + i_d * float(spec.Od[k]) - i_a * float(spec.Oa[k])


@dataclass(frozen=True)
class StageGame:
    stage: int
    prior: np.ndarray            # covariance before the stage-k measurement
    outcomes: dict               # h -> P_k
    continuation: dict           # h -> J_{k+1}(P_k)
    gain: np.ndarray             # H, the covariance reduction from a received measurement
    threshold: float
    payoff: dict                 # (i_d, i_a) -> value


def stage_game(
    P_prev: Optional[np.ndarray],
    k: int,
    J_next: ValueFunction,
    spec: GameSpec,
    riccati: RiccatiSolution,
) -> StageGame:
    Zp = prior_covariance(P_prev, k, spec)
    P_obs = measurement_update(Zp, spec)[0]
    H = information_gain(Zp, spec)[0]
    outcomes = {0: Zp, 1: P_obs}
    cont = {h: float(J_next(P)) for h, P in outcomes.items()}
    phi = riccati.phi[k]
    threshold = float(np.trace(H @ phi)) + cont[0] - cont[1]
    rule = spec.observation_rule
    payoff = {}
    for i_d, i_a in PAIRS:
        h = rule(i_d, i_a)
        payoff[(i_d, i_a)] = stage_cost(outcomes[h], k, i_d, i_a, spec, riccati) + cont[h]
    return StageGame(k, Zp, outcomes, cont, H, threshold, payoff)


def threshold_T(
    P_prev: Optional[np.ndarray],
    k: int,
    J_next: ValueFunction,
    spec: GameSpec,
    riccati: RiccatiSolution,
) -> float:
    """Value of a received measurement: Tr(H phi_k) + J_{k+1}(Z) - J_{k+1}(Z - H)."""
    return stage_game(P_prev, k, J_next, spec, riccati).threshold


@dataclass(frozen=True)
class StageDecision:
    stage: int
    i_d: Optional[int]
    i_a: Optional[int]
    regime: Regime
    value: Optional[float]
    threshold: float

    @property
    def pair(self) -> Optional[tuple[int, int]]:
        if self.i_d is None:
            return None
        return (self.i_d, self.i_a)


def _threshold_rule(T: float, od: float, oa: float, info: InfoStructure) -> Optional[tuple[int, int]]:
    # zero margins resolve to inaction
    if info is InfoStructure.DEFENDER_LEADS:
        if od < oa < T:
            return (1, 1)
        if od < T <= oa:
            return (1, 0)
        return (0, 0)
    if info is InfoStructure.ATTACKER_LEADS:
        if od >= T:
            return (0, 0)
        if od + oa < T:
            return (0, 1)
        return (1, 0)
    if od >= T:
        return (0, 0)
    if T <= oa:
        return (1, 0)
    return None


def _matrix_game_rule(payoff: dict, info: InfoStructure) -> Optional[tuple[int, int]]:
    """Pure solution of an arbitrary 2x2 payoff table, ties resolved to inaction."""
    if info is InfoStructure.DEFENDER_LEADS:
        reply = {d: int(payoff[(d, 1)] > payoff[(d, 0)]) for d in (0, 1)}
        d = int(payoff[(1, reply[1])] < payoff[(0, reply[0])])
        return (d, reply[d])
    if info is InfoStructure.ATTACKER_LEADS:
        reply = {a: int(payoff[(1, a)] < payoff[(0, a)]) for a in (0, 1)}
        a = int(payoff[(reply[1], 1)] > payoff[(reply[0], 0)])
        return (reply[a], a)
    for d, a in PAIRS:
        if payoff[(1 - d, a)] < payoff[(d, a)] or payoff[(d, 1 - a)] > payoff[(d, a)]:
            continue
        return (d, a)
    return None


def select_from_game(game: StageGame, spec: GameSpec) -> StageDecision:
    k = game.stage
    if k == 0 and isinstance(spec.initial_state, KnownExactly):
        return StageDecision(k, 0, 0, Regime.FORCED, game.payoff[(0, 0)], game.threshold)
    if spec.observation_rule.name == DEFAULT_RULE.name:
        pair = _threshold_rule(game.threshold, float(spec.Od[k]), float(spec.Oa[k]), spec.info_structure)
    else:
        pair = _matrix_game_rule(game.payoff, spec.info_structure)
    if pair is None:
        return StageDecision(k, None, None, Regime.NO_PURE_NASH, None, game.threshold)
    return StageDecision(k, pair[0], pair[1], Regime.EQUILIBRIUM, game.payoff[pair], game.threshold)


def stage_equilibrium(
    P_prev: Optional[np.ndarray],
    k: int,
    J_next: ValueFunction,
    spec: GameSpec,
    riccati: RiccatiSolution,
) -> StageDecision:
    """Equilibrium observe/jam pair at stage k under the spec's information structure.

    Under simultaneous moves the result may carry ``Regime.NO_PURE_NASH``
    with no pair and no value; that is a regime, not an error.
    """
    return select_from_game(stage_game(P_prev, k, J_next, spec, riccati), spec)


def follow_sequence(spec: GameSpec, decisions: Sequence[tuple[int, int]]) -> list[np.ndarray]:
    """Covariances P_0..P_{N-1} produced by a fixed observe/jam sequence."""
    out = []
    P = None
    for k, (i_d, i_a) in enumerate(decisions):
        P = stage_covariance(P, k, spec.observation_rule(i_d, i_a), spec)
        out.append(P)
    return out
