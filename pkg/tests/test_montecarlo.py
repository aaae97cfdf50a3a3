# Copyright (c) 2024 consult contributors
#
# SPDX-License-Identifier: Apache-2.0

import pytest

from consult.errors import ParameterRange, UnmappedBelief
from consult.model import (Decision, Payoffs, Problem, STATE_R, STOP_L,
                           STOP_R)
from consult.montecarlo import (SolutionPolicy, consult_until_reveal,
                                decomposition_check, never_consult,
                                predict_payoff, simulate_policy,
                                trace_policy)
from consult.solver import SOLVER_GRID, GridConfig, solve, value_at

from problems import mixed_pair

RUNS = 20000


def close(report, want, k=4.0):
    assert abs(report.mean_payoff - want) <= k * report.std_error + 1e-12


class TestSimulate:

    def test_never_consult_is_exact(self):
        problem = mixed_pair(prior=0.7)
        rep = simulate_policy(problem, never_consult(problem), 10000)
        assert rep.mean_payoff == pytest.approx(0.7, abs=1e-15)
        assert rep.std_error == 0.0
        assert (rep.E_r, rep.E_l) == (0.0, 0.0)
        assert (rep.P_r, rep.P_l) == (1.0, 0.0)
        assert rep.runs_r + rep.runs_l == 10000

    def test_consult_until_reveal(self):
        problem = mixed_pair(cost=0.01)
        rep = simulate_policy(problem, consult_until_reveal(problem, 'c2'),
                              RUNS, seed=5)
        close(rep, 0.8)
        assert (rep.P_r, rep.P_l) == (1.0, 1.0)
        assert rep.E_r == pytest.approx(20, rel=0.05)
        assert rep.truncated == 0

    def test_solved_policy(self, quiet):
        sol = solve(quiet)
        rep = simulate_policy(quiet, SolutionPolicy(sol), RUNS, seed=11)
        close(rep, value_at(sol, 0.5))
        assert value_at(sol, 0.5) == pytest.approx(0.794118, abs=1e-6)

    def test_stopping_policy_of_expensive_problem(self):
        problem = mixed_pair(cost=0.3)
        rep = simulate_policy(problem, SolutionPolicy(solve(problem)), 5000)
        assert rep.mean_payoff == pytest.approx(0.5, abs=1e-15)
        assert rep.E_r == rep.E_l == 0.0

    def test_grid_policy(self, mixed):
        sol = solve(mixed, SOLVER_GRID, GridConfig(grid_size=2001))
        rep = simulate_policy(mixed, SolutionPolicy(sol), RUNS, seed=2)
        close(rep, value_at(sol, 0.5), k=5.0)

    def test_decomposition_is_an_identity(self, mixed):
        sol = solve(mixed)
        for seed in range(3):
            rep = simulate_policy(mixed, SolutionPolicy(sol), 3000, seed=seed)
            assert decomposition_check(rep, mixed) < 1e-12

    def test_same_seed_same_report(self, mixed):
        policy = SolutionPolicy(solve(mixed))
        a = simulate_policy(mixed, policy, 5000, seed=7, block=1000)
        b = simulate_policy(mixed, policy, 5000, seed=7, block=1000)
        c = simulate_policy(mixed, policy, 5000, seed=8, block=1000)
        assert a == b
        assert a.mean_payoff != c.mean_payoff

    def test_prior_transplant(self):
        problem = Problem(0.5, mixed_pair().consultants, 0.05,
                          Payoffs(1.0, 0.6))
        policy = SolutionPolicy(solve(problem))
        base = simulate_policy(problem, policy, RUNS, seed=1)
        moved = simulate_policy(problem, policy, RUNS, seed=2,
                                state_prior=0.3)
        assert moved.prior == 0.3
        want = predict_payoff(base, problem, 0.3)
        tol = 4 * (1.5 * base.std_error + moved.std_error)
        assert abs(moved.mean_payoff - want) <= tol
        assert predict_payoff(base, problem) == \
            pytest.approx(base.mean_payoff, abs=1e-12)

    def test_one_state_only(self):
        problem = mixed_pair(prior=0.3)
        rep = simulate_policy(problem, never_consult(problem), 1000,
                              state_prior=1.0)
        assert (rep.runs_r, rep.runs_l) == (1000, 0)
        assert rep.mean_payoff == 0.0

    def test_truncation(self):
        problem = mixed_pair(cost=0.01)
        rep = simulate_policy(problem, consult_until_reveal(problem, 'c2'),
                              2000, max_steps=1)
        assert 1800 < rep.truncated < 2000
        assert rep.E_r <= 1.0 and rep.E_l <= 1.0

    def test_errors(self, mixed):
        stop = never_consult(mixed)
        with pytest.raises(ParameterRange):
            simulate_policy(mixed, stop, 0)
        with pytest.raises(ParameterRange):
            simulate_policy(mixed, stop, 10, block=0)
        with pytest.raises(ParameterRange):
            simulate_policy(mixed, stop, 10, state_prior=1.5)
        with pytest.raises(ParameterRange):
            simulate_policy(mixed, lambda p: Decision.consult('zz'), 10)


class TestPolicies:

    def test_lattice_policy_is_exact(self, quiet):
        policy = SolutionPolicy(solve(quiet))
        assert policy(0.5) == Decision.consult('j2')
        assert policy(0.99) == STOP_R
        assert policy(0.01) == STOP_L
        with pytest.raises(UnmappedBelief):
            policy(0.3)

    def test_grid_policy_reads_nearest_point(self, mixed):
        policy = SolutionPolicy(solve(mixed, SOLVER_GRID,
                                      GridConfig(grid_size=101)))
        assert policy(0.3001) == policy(0.3)

    def test_lookups_are_bounded(self, mixed):
        sol = solve(mixed, SOLVER_GRID, GridConfig(grid_size=101))
        policy = SolutionPolicy(sol, memo_size=4)
        for i in range(51):
            assert policy(i / 50) == sol.decision_at(i / 50)
        assert policy._lookup.cache_info().currsize == 4

    def test_until_reveal(self, mixed):
        policy = consult_until_reveal(mixed, 'c2')
        assert policy(0.4) == Decision.consult('c2')
        assert policy(1.0) == STOP_R
        assert policy(0.0) == STOP_L
        with pytest.raises(KeyError):
            consult_until_reveal(mixed, 'nobody')


class TestTrace:

    def test_reveal_path(self):
        problem = mixed_pair(cost=0.01)
        tr = trace_policy(problem, consult_until_reveal(problem, 'c2'),
                          seed=3)
        assert not tr.truncated
        assert tr.steps
        assert all(s.consultant == 'c2' for s in tr.steps)
        assert all(s.signal == 'null' for s in tr.steps[:-1])
        assert tr.steps[-1].posterior in (0.0, 1.0)
        assert tr.action == (STOP_R if tr.state == STATE_R else STOP_L)
        assert tr.cost == pytest.approx(0.01 * len(tr.steps))

    def test_truncated(self, mixed):
        tr = trace_policy(mixed, consult_until_reveal(mixed, 'c2'),
                          max_steps=0)
        assert tr.truncated
        assert tr.steps == ()
        assert tr.action == STOP_R
        assert tr.cost == 0.0
