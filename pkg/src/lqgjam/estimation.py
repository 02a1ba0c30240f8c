"""Error-covariance operators and the state-estimate filter.

``Z(P) = A P A' + C Sigma_s C'`` is the one-step prediction and
``H(P) = Z D' (D Z D' + E Sigma_o E')^{-1} D Z`` the reduction delivered by a
received measurement, so the error covariance after stage n is ``Z`` when the
measurement is missing and ``Z - H`` (computed in Joseph form) when it arrives.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import GameSpec, KnownExactly

INNOVATION_TOL = 1e-12
CLAMP_TOL = 1e-10


class SingularInnovation(np.linalg.LinAlgError):
    pass


class InvalidInitialObservation(ValueError):
    pass


def clean_covariance(P: np.ndarray) -> np.ndarray:
    """Symmetrize and clamp tiny negative eigenvalues (above -1e-10) to zero."""
    S = 0.5 * (P + P.T)
    if S.shape[0] == 1:
        if -CLAMP_TOL <= S[0, 0] < 0:
            return np.zeros_like(S)
        return S
    if S.size == 0:
        return S
    lam, V = np.linalg.eigh(S)
    if lam[0] >= 0 or lam[0] < -CLAMP_TOL:
        return S
    lam = np.where(lam < 0, 0.0, lam)
    return 0.5 * ((V * lam) @ V.T + ((V * lam) @ V.T).T)


def is_perfect_observation(spec: GameSpec) -> bool:
    """True when the measurement is noiseless and D is square and invertible."""
    return spec.perfect_observation


def predict_Z(P: np.ndarray, spec: GameSpec) -> np.ndarray:
    A, C = spec.A, spec.C
    return clean_covariance(A @ P @ A.T + C @ spec.sigma_s @ C.T)


def prior_covariance(P_prev: Optional[np.ndarray], k: int, spec: GameSpec) -> np.ndarray:
    """Covariance before the stage-k measurement.

    Stage 0 has no prediction step: the prior is the initial covariance
    (zero when the initial state is known exactly).
    """
    if k == 0:
        return spec.sigma_0
    return predict_Z(P_prev, spec)


def _innovation(Zp: np.ndarray, spec: GameSpec) -> np.ndarray:
    D, E = spec.D, spec.E
    S = D @ Zp @ D.T + E @ spec.sigma_o @ E.T
    return 0.5 * (S + S.T)


def _kalman_gain(Zp: np.ndarray, spec: GameSpec) -> np.ndarray:
    if is_perfect_observation(spec):
        return np.linalg.inv(spec.D)
    S = _innovation(Zp, spec)
    lam = np.linalg.eigvalsh(S).min() if S.size else np.inf
    if lam <= INNOVATION_TOL:
        raise SingularInnovation(f"innovation covariance is singular (min eigenvalue {lam:.3g})")
    # G = Zp D' S^{-1}, solved against the symmetric S
    return np.linalg.solve(S, spec.D @ Zp).T


def information_gain(Zp: np.ndarray, spec: GameSpec) -> tuple[np.ndarray, np.ndarray]:
    """(H, G) for a given predicted covariance ``Zp``."""
    G = _kalman_gain(Zp, spec)
    if is_perfect_observation(spec):
        return Zp.copy(), G
    H = G @ spec.D @ Zp
    return clean_covariance(H), G


def gain_H(P: np.ndarray, spec: GameSpec) -> tuple[np.ndarray, np.ndarray]:
    """Return (H(P), G) where G is the Kalman gain applied after predicting from P."""
    return information_gain(predict_Z(P, spec), spec)


def measurement_update(Zp: np.ndarray, spec: GameSpec) -> tuple[np.ndarray, np.ndarray]:
    """Joseph-form posterior covariance and the gain used to reach it."""
    G = _kalman_gain(Zp, spec)
    if is_perfect_observation(spec):
        return np.zeros_like(Zp), G
    I_GD = np.eye(spec.q) - G @ spec.D
    GE = G @ spec.E
    P = I_GD @ Zp @ I_GD.T + GE @ spec.sigma_o @ GE.T
    return clean_covariance(P), G


def propagate(P_prev: np.ndarray, h: int, spec: GameSpec) -> np.ndarray:
    Zp = predict_Z(P_prev, spec)
    if not h:
        return Zp
    return measurement_update(Zp, spec)[0]


def initial_covariance(spec: GameSpec, h0: int) -> np.ndarray:
    if isinstance(spec.initial_state, KnownExactly):
        if h0:
            raise InvalidInitialObservation(
                "initial state is known exactly; the stage-0 measurement cannot be received"
            )
        return np.zeros((spec.q, spec.q))
    cov = spec.initial_state.cov
    if not h0:
        return cov.copy()
    return measurement_update(cov, spec)[0]


def stage_covariance(P_prev: Optional[np.ndarray], k: int, h: int, spec: GameSpec) -> np.ndarray:
    """P_k given P_{k-1} (ignored at k = 0) and the stage-k outcome h."""
    if k == 0:
        return initial_covariance(spec, h)
    return propagate(P_prev, h, spec)


@dataclass(frozen=True)
class FilterState:
    """Estimate and error covariance after a stage's measurement step.

    ``xhat`` may have a leading batch axis (one row per replicate); ``P`` is
    shared because it does not depend on the measured values.
    """

    xhat: np.ndarray
    P: np.ndarray


def _check_observation(observation, h: int) -> None:
    if h and observation is None:
        raise ValueError("h = 1 requires an observation")
    if not h and observation is not None:
        raise ValueError("h = 0 but an observation was supplied")


def filter_start(spec: GameSpec, observation: Optional[np.ndarray], h: int) -> FilterState:
    """Stage-0 estimate: the prior mean, corrected if the first measurement arrives."""
    _check_observation(observation, h)
    xhat = spec.x0_mean.copy()
    if not h:
        return FilterState(xhat, initial_covariance(spec, 0))
    if isinstance(spec.initial_state, KnownExactly):
        raise InvalidInitialObservation("initial state is known exactly")
    P, G = measurement_update(spec.sigma_0, spec)
    y = np.asarray(observation, dtype=float)
    xhat = xhat + (y - xhat @ spec.D.T) @ G.T
    return FilterState(xhat, P)


def filter_step(
    state: FilterState,
    ud: np.ndarray,
    ua: np.ndarray,
    observation: Optional[np.ndarray],
    h: int,
    spec: GameSpec,
) -> FilterState:
    """Advance one stage: predict with both controls, then correct if h = 1."""
    _check_observation(observation, h)
    xpred = state.xhat @ spec.A.T + np.asarray(ud) @ spec.Bd.T + np.asarray(ua) @ spec.Ba.T
    Zp = predict_Z(state.P, spec)
    if not h:
        return FilterState(xpred, Zp)
    P, G = measurement_update(Zp, spec)
    y = np.asarray(observation, dtype=float)
    return FilterState(xpred + (y - xpred @ spec.D.T) @ G.T, P)
