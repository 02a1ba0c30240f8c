from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from factories import baseline_spec, random_spec, scalar_spec, stage_array
from oracles import lqr_riccati, scalar_riccati_step
from lqgjam.control_synthesis import (
    ConcavityViolation,
    SingularStageMatrix,
    backward_riccati,
    build_M,
    controls_at,
    factor_M,
    gains_explicit,
)

SCALAR_L_PREV = 1 + Fraction(81, 100) * Fraction(40, 41)


def test_scalar_riccati_matches_rational_oracle():
    spec = scalar_spec()
    sol = backward_riccati(spec)
    L_prev, phi, M, Minv = scalar_riccati_step("0.9", 1, 1, 1, 1, 10, 8)
    assert L_prev == SCALAR_L_PREV
    assert abs(sol.L[-2, 0, 0] - float(L_prev)) <= 1e-12
    assert abs(sol.phi[-1, 0, 0] - float(phi)) <= 1e-12
    assert sol.L[-1, 0, 0] == 8.0


def test_factor_of_scalar_stage_matrix():
    spec = scalar_spec()
    L_next = np.array([[8.0]])
    np.testing.assert_allclose(build_M(L_next, spec, 4), [[9.0, 8.0], [8.0, -2.0]])
    omega, T = factor_M(L_next, spec, 4)
    Minv = omega @ T @ omega.T
    assert abs(Minv.sum() - 9 / 82) <= 1e-15
    assert np.allclose(np.triu(omega, 1), 0) and np.allclose(np.diag(omega), 1)


def test_uncoupled_stage_factor_is_diagonal():
    spec = scalar_spec(Bd=[[1.0], [0.0]], Ba=[[0.0], [1.0]], A=[[0.9, 0], [0, 0.5]], C=np.eye(2).tolist(),
                       D=np.eye(2).tolist(), E=np.eye(2).tolist(), sigma_s=np.eye(2).tolist(),
                       sigma_o=np.eye(2).tolist(), x0=[0.0, 0.0], sigma_0=np.eye(2).tolist(),
                       Q=np.eye(2).tolist(), Q_N=np.eye(2).tolist())
    L_next = np.diag([2.0, 3.0])
    omega, T = factor_M(L_next, spec, 0)
    np.testing.assert_array_equal(omega, np.eye(2))
    np.testing.assert_allclose(T, np.diag([1 / 3.0, -1 / (10.0 - 3.0)]))


def test_gains_agree_between_closed_forms_on_scalar_case():
    spec = scalar_spec()
    sol = backward_riccati(spec)
    Kd, Ka = gains_explicit(np.array([[8.0]]), spec, 4)
    np.testing.assert_allclose(Kd, sol.Kd(4), rtol=1e-12)
    np.testing.assert_allclose(Ka, sol.Ka(4), rtol=1e-12)
    np.testing.assert_allclose([Kd[0, 0], Ka[0, 0]], [0.878048780487805, -0.0878048780487805], rtol=1e-12)


def test_zero_dynamics_give_zero_gains_and_L_equal_Q():
    spec = scalar_spec(A=0.0)
    sol = backward_riccati(spec)
    np.testing.assert_array_equal(sol.L[:-1], spec.Q)
    assert np.all(sol.gains == 0)


def test_concavity_violation_at_equality():
    spec = scalar_spec(Ra=8.0)
    with pytest.raises(ConcavityViolation) as err:
        backward_riccati(spec)
    assert err.value.stage == 4


def test_relaxed_mode_still_rejects_singular_blocks():
    spec = scalar_spec(Ra=8.0, enforce_concavity=False)
    with pytest.raises(SingularStageMatrix) as err:
        backward_riccati(spec)
    assert err.value.stage == 4


def test_baseline_requires_relaxed_mode():
    with pytest.raises(ConcavityViolation):
        backward_riccati(baseline_spec(enforce_concavity=True))
    sol = backward_riccati(baseline_spec())
    assert np.all(np.isfinite(sol.L))


def test_no_attacker_reduces_to_lqr():
    rng = np.random.default_rng(5)
    spec = random_spec(rng, 3, 2, 0, horizon=6)
    sol = backward_riccati(spec)
    L_ref = lqr_riccati(spec.A, spec.Bd, spec.Q, spec.Rd, spec.Q_N, spec.horizon)
    for n in range(spec.horizon + 1):
        np.testing.assert_allclose(sol.L[n], L_ref[n], rtol=1e-10, atol=1e-10)
    assert sol.Ka(0).shape == (0, 3)
    Kd_lqr = np.linalg.solve(spec.Rd[0] + spec.Bd.T @ sol.L[1] @ spec.Bd, spec.Bd.T @ sol.L[1] @ spec.A)
    np.testing.assert_allclose(sol.Kd(0), Kd_lqr, rtol=1e-10, atol=1e-12)


def test_controls_at():
    spec = scalar_spec()
    sol = backward_riccati(spec)
    ud, ua = controls_at(sol, 4, np.array([0.0]))
    assert ud.tolist() == [0.0] and ua.tolist() == [0.0]
    ud, ua = controls_at(sol, 4, np.array([1.0]))
    Minv = np.linalg.inv(np.array([[9.0, 8.0], [8.0, -2.0]]))
    expected = -Minv @ np.array([1.0, 1.0]) * 8 * 0.9
    np.testing.assert_allclose([ud[0], ua[0]], expected, rtol=1e-12)
    ud2, ua2 = controls_at(sol, 4, np.array([2.0]))
    np.testing.assert_allclose([ud2[0], ua2[0]], 2 * expected, rtol=1e-12)
    batch_ud, _ = controls_at(sol, 4, np.array([[1.0], [2.0]]))
    assert batch_ud.shape == (2, 1)
    with pytest.raises(IndexError):
        controls_at(sol, 5, np.array([1.0]))


def test_solution_is_immutable():
    sol = backward_riccati(scalar_spec())
    with pytest.raises(ValueError):
        sol.L[0, 0, 0] = 1.0


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), q=st.integers(1, 4), md=st.integers(1, 4), ma=st.integers(0, 4))
def test_riccati_invariants(seed, q, md, ma):
    spec = random_spec(np.random.default_rng(seed), q, md, ma, horizon=5)
    sol = backward_riccati(spec)
    eye = np.eye(md + ma)
    for n in range(spec.horizon):
        assert np.abs(sol.M[n] @ sol.Minv(n) - eye).max() <= 1e-9
        first, second = sol.T[n][:md, :md], sol.T[n][md:, md:]
        assert np.linalg.eigvalsh(first).min() > 0
        if ma:
            assert np.linalg.eigvalsh(second).max() < 0
        Kd, Ka = gains_explicit(sol.L[n + 1], spec, n)
        stacked = np.vstack([Kd, Ka])
        scale = max(np.abs(sol.gains[n]).max(), 1e-300)
        assert np.abs(stacked - sol.gains[n]).max() <= 1e-8 * scale
        np.testing.assert_array_equal(sol.phi[n], sol.phi[n].T)
    for n in range(spec.horizon + 1):
        np.testing.assert_array_equal(sol.L[n], sol.L[n].T)
        assert np.linalg.eigvalsh(sol.L[n]).min() >= -1e-8 * max(1.0, np.abs(sol.L[n]).max())


def test_phi_becomes_semidefinite_as_attack_cost_grows():
    spec = baseline_spec(Ra=np.full((30, 1, 1), 1e6), enforce_concavity=True)
    sol = backward_riccati(spec)
    for phi in sol.phi:
        assert np.linalg.eigvalsh(phi).min() >= -1e-6 * np.linalg.norm(phi, 2)


def test_phi_indefinite_for_two_dimensional_game():
    spec = scalar_spec(
        A=[[1.0, 0.5], [0.0, 0.9]], Bd=[[1.0], [0.0]], Ba=[[0.0], [1.0]], C=np.eye(2).tolist(),
        D=np.eye(2).tolist(), E=np.eye(2).tolist(), sigma_s=np.eye(2).tolist(), sigma_o=np.eye(2).tolist(),
        x0=[0.0, 0.0], sigma_0=np.eye(2).tolist(), Q=np.eye(2).tolist(), Q_N=np.eye(2).tolist(), Ra=30.0,
    )
    sol = backward_riccati(spec)
    lam = np.linalg.eigvalsh(sol.phi)
    assert np.any((lam[:, 0] < 0) & (lam[:, -1] > 0))


def test_phi_negative_when_attack_is_cheap():
    spec = baseline_spec(Ra=stage_array(0.9, 30, last=10.0))
    sol = backward_riccati(spec)
    assert sol.phi.min() < 0 < sol.phi.max()
