# Copyright (c) 2024 consult contributors
#
# SPDX-License-Identifier: Apache-2.0

from hypothesis import given, settings
import numpy as np
import pytest

from consult.errors import ParameterRange
from consult.model import Decision, Problem, STOP_L, STOP_R
from consult.solver import (GridConfig, SOLVER_GRID, solve, thresholds,
                            value_at)
from consult.solver.grid import bellman_backup, solve_grid, value_iteration
from consult.theory import brute_force_value

from problems import (mixed_pair, noisy_pair, problems,
                      quiet_consultant, revealer, skewed)

C1 = Decision.consult('c1')
C2 = Decision.consult('c2')


def grid(problem, n=4001, **kw):
    return solve_grid(problem, GridConfig(grid_size=n, **kw))


class TestBackup:

    def test_one_backup_from_stopping_values(self):
        problem = mixed_pair(cost=0.31)
        g = np.linspace(0, 1, 2001)
        stop = np.maximum(g, 1 - g)
        v, ties = bellman_backup(stop, problem, 0.5, g)
        assert v == pytest.approx(0.5)
        assert ties == (STOP_R, STOP_L)

    def test_backup_is_a_fixed_point(self):
        sol = grid(mixed_pair(cost=0.05), 1001)
        for i in (100, 300, 500, 770):
            p = sol.grid[i]
            v, _ = bellman_backup(sol.values, sol.problem, p, sol.grid)
            assert v == pytest.approx(sol.values[i], abs=1e-7)


class TestGridSolver:

    def test_config_validation(self):
        with pytest.raises(ParameterRange):
            GridConfig(grid_size=2)
        with pytest.raises(ParameterRange):
            GridConfig(tol=0)
        assert GridConfig().iters_for(0.5) == 40
        assert GridConfig(max_iters=7).iters_for(0.5) == 7

    def test_first_sweep_is_stopping_values(self):
        it, values, delta = next(value_iteration(mixed_pair()))
        g = np.linspace(0, 1, 4001)
        assert it == 0
        np.testing.assert_allclose(values, np.maximum(g, 1 - g))

    def test_sweeps_rise_pointwise(self):
        last = None
        for it, values, delta in value_iteration(mixed_pair(cost=0.05),
                                                 GridConfig(grid_size=801)):
            if last is not None:
                assert np.all(values >= last - 1e-15), it
            last = values.copy()
        assert it > 2

    def test_large_cost_never_consults(self):
        sol = grid(mixed_pair(cost=0.3), 2001)
        assert sol.meta.converged
        assert all(d.is_stop for d in sol.policy)
        g = sol.grid
        assert np.max(np.abs(sol.values - np.maximum(g, 1 - g))) < 1e-9

    def test_cost_above_payoff_skips_iteration(self):
        sol = grid(mixed_pair(cost=1.0), 101)
        assert sol.meta.iterations == 0
        assert sol.meta.converged
        t = thresholds(sol)
        assert (t.p_L, t.p_R) == (0.5, 0.5)

    def test_revealer_alone(self):
        sol = grid(Problem(0.5, (revealer(0.05, 'v'),), 0.02))
        assert value_at(sol, 0.5) == pytest.approx(0.6, abs=1e-9)
        t = thresholds(sol)
        assert t.p_L == pytest.approx(0.4, abs=1e-3)
        assert t.p_R == pytest.approx(0.6, abs=1e-3)

    def test_exact_consultant_on_grid(self):
        sol = solve(quiet_consultant(), SOLVER_GRID)
        assert value_at(sol, 0.5) == pytest.approx(16 / 17 - 0.05 * 50 / 17,
                                                   abs=1e-3)

    def test_solution_lookup(self):
        sol = grid(mixed_pair(cost=0.1), 11)
        assert sol.index_of(0.0) == 0
        assert sol.index_of(0.96) == 10
        assert sol.index_of(0.34) == 3
        assert sol.decision_at(0.0) == STOP_L
        assert sol.decision_at(1.0) == STOP_R
        assert sol.consult_row('c2').shape == (11,)

    def test_tie_sets_start_with_policy(self):
        sol = grid(mixed_pair(cost=0.05), 501)
        for d, ties in zip(sol.policy, sol.ties):
            assert ties[0] == d


@pytest.mark.slow
class TestNoisyPairRegions:

    REGIONS = [
        ((0.0, 0.018), STOP_L),
        ((0.02, 0.98), C2),
        ((0.983, 1.0), STOP_R),
    ]

    @pytest.fixture(scope='class')
    def sol(self):
        return solve_grid(noisy_pair(), GridConfig(grid_size=4001, tol=1e-10))

    def test_converges(self, sol):
        assert sol.meta.converged

    def test_regions(self, sol):
        for (lo, hi), d in self.REGIONS:
            for p, pol in zip(sol.grid, sol.policy):
                if lo <= p <= hi:
                    assert pol == d, (p, pol)

    def test_c2_beats_c1_in_the_middle(self, sol):
        mid = (sol.grid >= 0.378) & (sol.grid <= 0.622)
        gap = (sol.consult_row('c2') - sol.consult_row('c1'))[mid]
        assert np.min(gap) > 1e-3
        assert np.max(gap) < 1e-2

    def test_values_at_half(self, sol):
        i = sol.index_of(0.5)
        assert value_at(sol, 0.5) == pytest.approx(0.963187, abs=1e-4)
        assert sol.consult_row('c2')[i] == pytest.approx(0.963187, abs=1e-4)
        assert sol.consult_row('c1')[i] == pytest.approx(0.956814, abs=1e-4)

    def test_thresholds(self, sol):
        t = thresholds(sol)
        assert t.p_L == pytest.approx(0.0188, abs=2e-3)
        assert t.p_R == pytest.approx(0.981, abs=2e-3)


@pytest.mark.slow
def test_strictly_convex_inside_the_consult_region():
    sol = grid(skewed(cost=0.02))
    t = thresholds(sol)
    v = sol.values
    inner = np.flatnonzero((sol.grid >= t.p_L + 0.05)
                           & (sol.grid <= t.p_R - 0.05))
    # Triples 20 points apart; adjacent points sit on shared chords
    i = inner[(inner >= 20) & (inner < len(v) - 20)]
    d2 = v[i - 20] - 2 * v[i] + v[i + 20]
    assert len(d2) > 100
    assert np.mean(d2 > 1e-12) >= 0.9


@given(problem=problems(min_cost=0.2, max_cost=0.5))
@settings(max_examples=50)
def test_grid_matches_oracle(problem):
    sol = grid(problem)
    oracle = brute_force_value(problem, 6).value
    v = value_at(sol, problem.prior)
    assert oracle <= v + 1e-9
    assert v - oracle < 1e-3


def check_value_properties(problem):
    cfg = GridConfig(grid_size=501)
    sol = solve_grid(problem, cfg)
    v = sol.values
    u = problem.payoffs
    assert v[0] == pytest.approx(u.u_Ll, abs=1e-12)
    assert v[-1] == pytest.approx(u.u_Rr, abs=1e-12)
    assert np.min(np.diff(v, 2)) >= -1e-6
    dearer = solve_grid(problem.with_cost(problem.cost * 1.5), cfg)
    assert np.all(dearer.values <= v + 1e-9)
    if u.u_Rr == 1 and u.u_Ll == 1:
        h = sol.grid[1] - sol.grid[0]
        t = thresholds(sol)
        assert t.p_L >= problem.cost - h
        assert t.p_R <= 1 - problem.cost + h


@given(problem=problems(max_cost=0.4))
@settings(max_examples=25)
def test_value_properties(problem):
    check_value_properties(problem)


@given(problem=problems(max_cost=0.4, unit_payoffs=True))
@settings(max_examples=25)
def test_threshold_bounds(problem):
    check_value_properties(problem)


@pytest.mark.slow
@given(problem=problems(max_cost=0.4))
@settings(max_examples=200)
def test_value_properties_full(problem):
    check_value_properties(problem)
