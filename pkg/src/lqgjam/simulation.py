"""Monte Carlo rollouts of the equilibrium controls and observe/jam strategy.

Randomness: replicate ``i`` under base seed ``s`` owns a Philox stream keyed
by ``(s << 64) | i``. Standard normals come from the Box-Muller transform
applied to consecutive uniform pairs ``(u1, u2)`` with ``u1 = 1 - U`` so the
logarithm never sees zero. Normals are consumed in a fixed order: the initial
state (q values), then process noise for stages 0..N-1 (N * dim(sigma_s)),
then measurement noise for stages 0..N-1 (N * dim(sigma_o)). Measurement
noise is drawn for every stage whether or not the measurement arrives, so a
replicate's noise does not depend on the strategy being simulated.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .control_synthesis import RiccatiSolution, controls_at
from .decisions import StrategyTree
from .estimation import FilterState, filter_start, filter_step
from .model import GameSpec

CHUNK = 16384


class MissingTreeNode(RuntimeError):
    pass


def replicate_generator(base_seed: int, index: int) -> np.random.Generator:
    key = ((int(base_seed) & 0xFFFFFFFFFFFFFFFF) << 64) | int(index)
    return np.random.Generator(np.random.Philox(key=key))


def box_muller(u: np.ndarray, count: int) -> np.ndarray:
    """Standard normals from uniforms in [0, 1) along the last axis (pairs)."""
    u1 = 1.0 - u[..., 0::2]
    u2 = u[..., 1::2]
    r = np.sqrt(-2.0 * np.log(u1))
    z = np.empty(u.shape[:-1] + (2 * u1.shape[-1],))
    z[..., 0::2] = r * np.cos(2.0 * np.pi * u2)
    z[..., 1::2] = r * np.sin(2.0 * np.pi * u2)
    return z[..., :count]


def psd_sqrt(S: np.ndarray) -> np.ndarray:
    if S.size == 0:
        return S.copy()
    lam, V = np.linalg.eigh(0.5 * (S + S.T))
    return (V * np.sqrt(np.clip(lam, 0.0, None))) @ V.T


def draw_normals(spec: GameSpec, base_seed: int, indices: np.ndarray) -> np.ndarray:
    N, q = spec.horizon, spec.q
    count = q + N * spec.sigma_s.shape[0] + N * spec.sigma_o.shape[0]
    n_uniform = count + (count % 2)
    u = np.empty((len(indices), n_uniform))
    for row, i in enumerate(indices):
        u[row] = replicate_generator(base_seed, i).random(n_uniform)
    return box_muller(u, count)


@dataclass(frozen=True)
class RolloutBatch:
    """Trajectories for R replicates, stacked on the leading axis."""

    x: np.ndarray            # (R, N+1, q)
    xhat: np.ndarray         # (R, N, q), estimate after stage-n measurement step
    ud: np.ndarray           # (R, N, m_d)
    ua: np.ndarray           # (R, N, m_a)
    y: np.ndarray            # (R, N, r), NaN where the measurement was not received
    i_d: np.ndarray          # (N,)
    i_a: np.ndarray          # (N,)
    h: np.ndarray            # (N,)
    P: np.ndarray            # (N, q, q) propagated error covariance
    stage_cost: np.ndarray   # (R, N)
    terminal: np.ndarray     # (R,)
    total: np.ndarray        # (R,)


@dataclass(frozen=True)
class RolloutResult:
    x: np.ndarray
    xhat: np.ndarray
    ud: np.ndarray
    ua: np.ndarray
    y: np.ndarray
    i_d: np.ndarray
    i_a: np.ndarray
    h: np.ndarray
    stage_cost: np.ndarray
    terminal: float
    total: float


def _quad(v: np.ndarray, M: np.ndarray) -> np.ndarray:
    return np.einsum("ri,ij,rj->r", v, M, v)


def simulate_batch(
    spec: GameSpec,
    riccati: RiccatiSolution,
    tree: StrategyTree,
    base_seed: int,
    indices: np.ndarray,
) -> RolloutBatch:
    N, q = spec.horizon, spec.q
    p, s = spec.sigma_s.shape[0], spec.sigma_o.shape[0]
    R = len(indices)
    z = draw_normals(spec, base_seed, indices)
    x0 = spec.x0_mean + z[:, :q] @ psd_sqrt(spec.sigma_0).T
    w = (z[:, q:q + N * p].reshape(R, N, p)) @ psd_sqrt(spec.sigma_s).T
    v = (z[:, q + N * p:].reshape(R, N, s)) @ psd_sqrt(spec.sigma_o).T

    r = spec.D.shape[0]
    x = np.empty((R, N + 1, q))
    xhat = np.empty((R, N, q))
    ud_all = np.empty((R, N, spec.m_d))
    ua_all = np.empty((R, N, spec.m_a))
    y_all = np.full((R, N, r), np.nan)
    i_d = np.zeros(N, dtype=int)
    i_a = np.zeros(N, dtype=int)
    h_all = np.zeros(N, dtype=int)
    P_all = np.empty((N, q, q))
    cost = np.empty((R, N))

    x[:, 0] = x0
    decision, children = tree.initial.decision, tree.initial.children
    state = None
    for n in range(N):
        if decision is None:
            raise MissingTreeNode(f"no decision stored for stage {n}")
        d, a = decision
        h = spec.observation_rule(d, a)
        y = x[:, n] @ spec.D.T + v[:, n] @ spec.E.T if h else None
        if state is None:
            state = filter_start(spec, y, h)
            state = FilterState(np.broadcast_to(state.xhat, (R, q)).copy(), state.P)
        else:
            state = filter_step(state, ud, ua, y, h, spec)
        ud, ua = controls_at(riccati, n, state.xhat)
        x[:, n + 1] = x[:, n] @ spec.A.T + ud @ spec.Bd.T + ua @ spec.Ba.T + w[:, n] @ spec.C.T
        cost[:, n] = (
            _quad(x[:, n], spec.Q[n]) + _quad(ud, spec.Rd[n]) - _quad(ua, spec.Ra[n])
            + d * spec.Od[n] - a * spec.Oa[n]
        )
        xhat[:, n], ud_all[:, n], ua_all[:, n] = state.xhat, ud, ua
        if h:
            y_all[:, n] = y
        i_d[n], i_a[n], h_all[n] = d, a, h
        P_all[n] = state.P
        if h not in children:
            raise MissingTreeNode(f"tree has no branch for outcome {h} at stage {n}")
        node = tree.nodes[children[h]]
        decision, children = node.decision, node.children

    terminal = _quad(x[:, N], spec.Q_N)
    total = cost.sum(axis=1) + terminal
    return RolloutBatch(x, xhat, ud_all, ua_all, y_all, i_d, i_a, h_all, P_all, cost, terminal, total)


def rollout(
    spec: GameSpec,
    riccati: RiccatiSolution,
    tree: StrategyTree,
    rng_seed: int,
    replicate: int = 0,
) -> RolloutResult:
    b = simulate_batch(spec, riccati, tree, rng_seed, np.array([replicate]))
    return RolloutResult(
        x=b.x[0], xhat=b.xhat[0], ud=b.ud[0], ua=b.ua[0], y=b.y[0],
        i_d=b.i_d, i_a=b.i_a, h=b.h, stage_cost=b.stage_cost[0],
        terminal=float(b.terminal[0]), total=float(b.total[0]),
    )


@dataclass(frozen=True)
class MonteCarloStats:
    replicates: int
    mean: float
    std: float
    std_error: float
    error_covariance: np.ndarray   # (N, q, q) empirical second moment of x_n - xhat_n
    propagated: np.ndarray         # (N, q, q) filter covariance P_n
    stage_cost_mean: np.ndarray    # (N,)


def monte_carlo(
    spec: GameSpec,
    riccati: RiccatiSolution,
    tree: StrategyTree,
    replicates: int,
    base_seed: int,
    chunk: int = CHUNK,
) -> MonteCarloStats:
    if replicates < 2:
        raise ValueError("monte_carlo needs at least 2 replicates")
    N, q = spec.horizon, spec.q
    totals = np.empty(replicates)
    errors = np.empty((replicates, N, q))
    costs = np.empty((replicates, N))
    P = None
    for start in range(0, replicates, chunk):
        idx = np.arange(start, min(start + chunk, replicates))
        b = simulate_batch(spec, riccati, tree, base_seed, idx)
        totals[idx] = b.total
        errors[idx] = b.x[:, :N] - b.xhat
        costs[idx] = b.stage_cost
        P = b.P
    # reduce once over all replicates so the chunk size cannot change the sums
    err2 = np.einsum("rni,rnj->nij", errors, errors)
    cost_sum = costs.sum(axis=0)
    std = float(np.std(totals, ddof=1))
    return MonteCarloStats(
        replicates=replicates,
        mean=float(np.mean(totals)),
        std=std,
        std_error=std / np.sqrt(replicates),
        error_covariance=err2 / replicates,
        propagated=P,
        stage_cost_mean=cost_sum / replicates,
    )


def _fmt(v) -> str:
    arr = np.atleast_1d(np.asarray(v, dtype=float))
    return ";".join(repr(float(t)) for t in arr)


TRACE_COLUMNS = ("stage", "x", "xhat", "ud", "ua", "id", "ia", "h", "stage_cost")


def write_trace(result: RolloutResult, path: Union[str, Path]) -> None:
    """One row per stage plus a final row carrying x_N and the terminal cost.

    Vector entries are ';'-joined.
    """
    N = len(result.stage_cost)
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(TRACE_COLUMNS)
        for n in range(N):
            out.writerow([
                n, _fmt(result.x[n]), _fmt(result.xhat[n]), _fmt(result.ud[n]), _fmt(result.ua[n]),
                int(result.i_d[n]), int(result.i_a[n]), int(result.h[n]), repr(float(result.stage_cost[n])),
            ])
        out.writerow([N, _fmt(result.x[N]), "", "", "", "", "", "", repr(result.terminal)])

