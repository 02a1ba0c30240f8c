"""Backward Riccati recursion for the saddle-point control laws.

At every stage the coupled matrix

    M_n = [[Rd + Bd' L Bd,  Bd' L Ba      ],
           [Ba' L Bd,       Ba' L Ba - Ra ]]       (L = L_{n+1})

is inverted through its block factorization M_n^{-1} = Omega T Omega', with
T = diag(S_B^{-1}, -(Ra - Ba' L Ba)^{-1}) and S_B the Schur complement of the
attacker block. M_n is never inverted densely.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import GameSpec

CONCAVITY_TOL = 1e-12


class ConcavityViolation(ArithmeticError):
    """Ra_n - Ba' L_{n+1} Ba is not positive definite at some stage."""

    def __init__(self, stage: int, min_eigenvalue: float):
        self.stage = stage
        self.min_eigenvalue = min_eigenvalue
        super().__init__(
            f"stage {stage}: Ra - Ba' L Ba has min eigenvalue {min_eigenvalue:.6g}; "
            "the attacker's stage problem is unbounded"
        )


class SingularStageMatrix(ArithmeticError):
    """A block of M_n is singular, so no linear saddle point exists at that stage."""

    def __init__(self, stage: int, block: str, min_abs_eigenvalue: float):
        self.stage = stage
        self.block = block
        super().__init__(f"stage {stage}: {block} is singular (min |eigenvalue| {min_abs_eigenvalue:.3g})")


def _sym(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


def _sym_inverse(M: np.ndarray, stage: int, block: str) -> np.ndarray:
    """Inverse of a symmetric matrix, via Cholesky when it is definite."""
    n = M.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    eye = np.eye(n)
    for sign in (1.0, -1.0):
        try:
            c = np.linalg.cholesky(sign * M)
        except np.linalg.LinAlgError:
            continue
        ci = np.linalg.solve(c, eye)
        return _sym(sign * (ci.T @ ci))
    # indefinite block (only reachable with enforce_concavity=False)
    lam, V = np.linalg.eigh(M)
    if np.abs(lam).min() <= CONCAVITY_TOL:
        raise SingularStageMatrix(stage, block, float(np.abs(lam).min()))
    return _sym((V / lam) @ V.T)


def _attacker_gap(L_next: np.ndarray, spec: GameSpec, n: int) -> np.ndarray:
    Ba = spec.Ba
    return _sym(spec.Ra[n] - Ba.T @ L_next @ Ba)


def _check_gap(gap: np.ndarray, spec: GameSpec, n: int) -> None:
    if gap.size == 0:
        return
    lam = float(np.linalg.eigvalsh(gap).min())
    if spec.enforce_concavity and lam <= CONCAVITY_TOL:
        raise ConcavityViolation(n, lam)


def factor_M(L_next: np.ndarray, spec: GameSpec, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Return (Omega, T) with M_n^{-1} = Omega @ T @ Omega.T.

    Omega is unit lower block-triangular (so Omega' is the unit upper factor);
    T is block diagonal. Under the concavity condition its first block is
    positive definite and its second negative definite.
    """
    Bd, Ba = spec.Bd, spec.Ba
    md, ma = spec.m_d, spec.m_a
    gap = _attacker_gap(L_next, spec, n)
    _check_gap(gap, spec, n)
    gap_inv = _sym_inverse(gap, n, "Ra - Ba' L Ba")
    coupling = Bd.T @ L_next @ Ba  # md x ma
    W = coupling @ gap_inv
    S_B = _sym(spec.Rd[n] + Bd.T @ L_next @ Bd + W @ coupling.T)
    S_B_inv = _sym_inverse(S_B, n, "S_B")

    m = md + ma
    omega = np.eye(m)
    omega[md:, :md] = W.T
    T = np.zeros((m, m))
    T[:md, :md] = S_B_inv
    T[md:, md:] = -gap_inv
    return omega, T


def build_M(L_next: np.ndarray, spec: GameSpec, n: int) -> np.ndarray:
    B = np.hstack([spec.Bd, spec.Ba])
    M = B.T @ L_next @ B
    md = spec.m_d
    M[:md, :md] += spec.Rd[n]
    M[md:, md:] -= spec.Ra[n]
    return M


def gains_explicit(L_next: np.ndarray, spec: GameSpec, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form stage gains (Kd, Ka) with u_d = -Kd x_hat and u_a = -Ka x_hat.

    Uses the Schur-complement expressions directly rather than the stacked
    factorization, so the two can be cross-checked.
    """
    A, Bd, Ba = spec.A, spec.Bd, spec.Ba
    q = spec.q
    gap = _attacker_gap(L_next, spec, n)
    _check_gap(gap, spec, n)
    gap_inv = _sym_inverse(gap, n, "Ra - Ba' L Ba")
    S_B = _sym(spec.Rd[n] + Bd.T @ L_next @ Bd + Bd.T @ L_next @ Ba @ gap_inv @ Ba.T @ L_next @ Bd)
    S_B_inv = _sym_inverse(S_B, n, "S_B")
    boost = np.eye(q) + L_next @ Ba @ gap_inv @ Ba.T
    LA = L_next @ A
    Kd = S_B_inv @ Bd.T @ boost @ LA
    Ka = -gap_inv @ Ba.T @ (np.eye(q) - L_next @ Bd @ S_B_inv @ Bd.T @ boost) @ LA
    return Kd, Ka


@dataclass(frozen=True)
class RiccatiSolution:
    """Per-stage output of :func:`backward_riccati`.

    ``L`` has N+1 entries (``L[N] == Q_N``); ``M``, ``omega``, ``T``,
    ``gains`` and ``phi`` have N. ``gains[n]`` stacks the defender rows above
    the attacker rows, so ``[u_d; u_a] = -gains[n] @ x_hat``.
    """

    L: np.ndarray
    M: np.ndarray
    omega: np.ndarray
    T: np.ndarray
    gains: np.ndarray
    phi: np.ndarray
    m_d: int

    @property
    def horizon(self) -> int:
        return self.phi.shape[0]

    @property
    def Minv_factors(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return list(zip(self.omega, self.T))

    def Minv(self, n: int) -> np.ndarray:
        return self.omega[n] @ self.T[n] @ self.omega[n].T

    def Kd(self, n: int) -> np.ndarray:
        return self.gains[n][: self.m_d]

    def Ka(self, n: int) -> np.ndarray:
        return self.gains[n][self.m_d:]


def backward_riccati(spec: GameSpec) -> RiccatiSolution:
    N, q = spec.horizon, spec.q
    m = spec.m_d + spec.m_a
    A = spec.A
    B = np.hstack([spec.Bd, spec.Ba])

    L = np.zeros((N + 1, q, q))
    Ms = np.zeros((N, m, m))
    omegas = np.zeros((N, m, m))
    Ts = np.zeros((N, m, m))
    gains = np.zeros((N, m, q))
    phis = np.zeros((N, q, q))

    L[N] = spec.Q_N
    for n in range(N - 1, -1, -1):
        Ln = L[n + 1]
        omega, T = factor_M(Ln, spec, n)
        Minv = omega @ T @ omega.T
        BtLA = B.T @ Ln @ A
        phi = _sym(BtLA.T @ Minv @ BtLA)
        Ms[n] = build_M(Ln, spec, n)
        omegas[n], Ts[n] = omega, T
        gains[n] = Minv @ BtLA
        phis[n] = phi
        L[n] = _sym(spec.Q[n] + A.T @ Ln @ A - phi)

    for arr in (L, Ms, omegas, Ts, gains, phis):
        arr.setflags(write=False)
    return RiccatiSolution(L=L, M=Ms, omega=omegas, T=Ts, gains=gains, phi=phis, m_d=spec.m_d)


def controls_at(solution: RiccatiSolution, n: int, xhat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Saddle-point controls at stage n for estimate ``xhat``.

    ``xhat`` may carry leading batch dimensions; the last axis is the state.
    """
    if not 0 <= n < solution.horizon:
        raise IndexError(f"stage {n} outside 0..{solution.horizon - 1}")
    u = -np.asarray(xhat, dtype=float) @ solution.gains[n].T
    return u[..., : solution.m_d], u[..., solution.m_d:]
