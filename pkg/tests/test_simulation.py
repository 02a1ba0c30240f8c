from __future__ import annotations

import csv

import numpy as np
import pytest

from factories import baseline_spec, scalar_spec
from lqgjam.simulation import (
    MissingTreeNode,
    TRACE_COLUMNS,
    box_muller,
    monte_carlo,
    rollout,
    write_trace,
)
from lqgjam.solver import solve


@pytest.fixture(scope="module")
def small():
    return solve(scalar_spec(Od=1.0, Oa=3.0))


def test_rollout_is_seed_deterministic(small):
    a = rollout(small.spec, small.riccati, small.tree, 42)
    b = rollout(small.spec, small.riccati, small.tree, 42)
    np.testing.assert_array_equal(a.x, b.x)
    np.testing.assert_array_equal(a.stage_cost, b.stage_cost)
    assert a.total == b.total
    c = rollout(small.spec, small.riccati, small.tree, 43)
    assert not np.array_equal(a.x, c.x)


def test_cost_accounting_identity(small):
    r = rollout(small.spec, small.riccati, small.tree, 7)
    assert r.total == r.stage_cost.sum() + r.terminal


def test_outcomes_follow_rule_and_measurements(small):
    r = rollout(small.spec, small.riccati, small.tree, 3)
    for n in range(small.spec.horizon):
        assert r.h[n] == small.spec.observation_rule(r.i_d[n], r.i_a[n])
        assert np.isnan(r.y[n]).all() == (r.h[n] == 0)


def test_unstable_plant_is_jammed_throughout():
    sol = solve(baseline_spec(A=[[1.1]]))
    r = rollout(sol.spec, sol.riccati, sol.tree, 0)
    assert r.i_a.tolist() == [1] * 30
    assert r.h.tolist() == [0] * 30
    assert np.isnan(r.y).all()


def test_noiseless_rollout_equals_analytic_value():
    spec = scalar_spec(C=0.0, E=0.0, sigma_0=None, x0=[1.5], Od=0.5, Oa=0.25)
    sol = solve(spec)
    r = rollout(sol.spec, sol.riccati, sol.tree, 1)
    assert r.total == pytest.approx(sol.value.total, rel=1e-12)


def test_monte_carlo_chunking_does_not_change_results(small):
    a = monte_carlo(small.spec, small.riccati, small.tree, 50, base_seed=5)
    b = monte_carlo(small.spec, small.riccati, small.tree, 50, base_seed=5, chunk=7)
    assert a.mean == b.mean and a.std_error == b.std_error
    np.testing.assert_array_equal(a.error_covariance, b.error_covariance)
    assert a.std_error == pytest.approx(a.std / np.sqrt(50))


def test_monte_carlo_needs_two_replicates(small):
    with pytest.raises(ValueError):
        monte_carlo(small.spec, small.riccati, small.tree, 1, base_seed=0)


def test_monte_carlo_mean_matches_value(small):
    stats = monte_carlo(small.spec, small.riccati, small.tree, 4000, base_seed=11)
    assert abs(stats.mean - small.value.total) <= 3 * stats.std_error


def test_box_muller_moments():
    u = np.random.default_rng(0).random(200_000)
    z = box_muller(u, 200_000)
    assert abs(z.mean()) < 0.01
    assert abs(z.var() - 1.0) < 0.01


def test_missing_branch_is_fatal(small):
    tree = small.tree
    first = tree.initial.decision
    h = small.spec.observation_rule(*first)
    saved = dict(tree.initial.children)
    try:
        del tree.initial.children[h]
        with pytest.raises(MissingTreeNode):
            rollout(small.spec, small.riccati, tree, 0)
    finally:
        tree.initial.children.clear()
        tree.initial.children.update(saved)


def test_trace_csv(small, tmp_path):
    r = rollout(small.spec, small.riccati, small.tree, 9)
    path = tmp_path / "trace.csv"
    write_trace(r, path)
    rows = list(csv.reader(path.open()))
    assert tuple(rows[0]) == TRACE_COLUMNS
    assert len(rows) == small.spec.horizon + 2
    assert float(rows[-1][-1]) == r.terminal
