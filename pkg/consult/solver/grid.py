# Copyright (c) 2024 consult contributors
#
# SPDX-License-Identifier: Apache-2.0

'''Value iteration on an equally spaced belief grid.

Posteriors that fall between grid points are evaluated by linear
interpolation. The limit value is convex, so interpolation can only bias
values upwards, by at most the grid modulus.
'''

from dataclasses import dataclass
import logging
from typing import Iterator, Optional, Tuple

import numpy as np

from ..errors import ParameterRange
from ..model import (BeliefLike, Decision, Problem, _p, posterior,
                     posterior_many, signal_prob, stopping_value)
from ..util import cost_cap, f
from .base import (SOLVER_GRID, Solution, SolveMeta, Solver, Thresholds,
                   branch_decisions, decide, order_ties, thresholds,
                   value_at)

log = logging.getLogger('consult.grid')

__all__ = ['GridConfig', 'GridSolver', 'Thresholds', 'bellman_backup',
           'solve_grid', 'stopping_value', 'thresholds', 'value_at',
           'value_iteration']


@dataclass(frozen=True)
class GridConfig:
    grid_size: int = f(4001, 'Equally spaced beliefs, including 0 and 1')
    tol: float = f(1e-10, 'Sup-norm change below which iteration stops')
    max_iters: Optional[int] = f(None, 'Iteration cap, ceil(20/c) if unset')
    tie_tol: float = f(1e-9, 'Branches this close to the best one tie')

    def __post_init__(self):
        if self.grid_size < 3:
            raise ParameterRange(f'grid_size {self.grid_size} < 3')
        if not self.tol > 0:
            raise ParameterRange(f'tol {self.tol} must be positive')
        if self.max_iters is not None and self.max_iters < 1:
            raise ParameterRange(f'max_iters {self.max_iters} < 1')
        if self.tie_tol < 0:
            raise ParameterRange(f'tie_tol {self.tie_tol} is negative')

    def iters_for(self, cost: float) -> int:
        if self.max_iters is not None:
            return self.max_iters
        return cost_cap(cost, 20)


class _Kernel:
    '''Transition weights of every consult branch on a fixed grid.

    Signals with equal likelihoods in both states leave the belief where it
    is; their mass is kept apart as the self-loop probability of the
    consultant.
    '''

    def __init__(self, problem: Problem, grid: np.ndarray):
        n = len(grid)
        self.terms = []
        self.stay = []
        for j in problem.consultants:
            terms = []
            stay = 0.0
            for s in j.signals:
                lr, ll = j.likelihoods(s)
                if lr == ll:
                    stay += lr
                    continue
                prob = grid * lr + (1.0 - grid) * ll
                pos = posterior_many(grid, lr, ll) * (n - 1)
                # Posteriors landing on a grid point use it exactly
                near = np.rint(pos)
                pos = np.where(np.abs(pos - near) < 1e-9, near, pos)
                lo = np.clip(np.floor(pos).astype(np.int64), 0, n - 2)
                terms.append((prob, lo, pos - lo))
            self.terms.append(terms)
            self.stay.append(stay)
        self.n = n

    def moving(self, k: int, values: np.ndarray) -> np.ndarray:
        acc = np.zeros(self.n)
        for prob, lo, w in self.terms[k]:
            acc += prob * (values[lo] * (1.0 - w) + values[lo + 1] * w)
        return acc

    def consult_values(self, values: np.ndarray, cost: float,
                       fold: bool = True) -> np.ndarray:
        '''One row per consultant.

        With ``fold`` the self-loop is solved in closed form, which scores
        consulting until the belief moves; without it the row is the plain
        one-step backup. Both operators share their fixed point.
        '''
        out = np.empty((len(self.terms), self.n))
        for k, stay in enumerate(self.stay):
            mov = self.moving(k, values)
            if fold and stay < 1.0:
                out[k] = (mov - cost) / (1.0 - stay)
            else:
                out[k] = mov + stay * values - cost
        return out


def _stop_rows(problem: Problem, grid: np.ndarray) -> np.ndarray:
    u = problem.payoffs
    return np.vstack([grid * float(u.u_Rr), (1.0 - grid) * float(u.u_Ll)])


def value_iteration(problem: Problem, cfg: GridConfig = None
                    ) -> Iterator[Tuple[int, np.ndarray, float]]:
    '''Yield ``(sweep, table, sup-norm change)`` starting from the stopping
    values (sweep 0).

    Sweeps stop once the change drops below ``cfg.tol`` or the cap is
    reached. Consulting is never profitable when ``c >= max(u)``, so no
    sweep follows the stopping values then.
    '''
    cfg = cfg or GridConfig()
    grid = np.linspace(0.0, 1.0, cfg.grid_size)
    c = float(problem.cost)
    stop = _stop_rows(problem, grid).max(axis=0)
    values = stop
    yield 0, values, 0.0
    if c >= problem.payoffs.max or not problem.consultants:
        return
    kernel = _Kernel(problem, grid)
    for it in range(1, cfg.iters_for(c) + 1):
        new = np.maximum(stop, kernel.consult_values(values, c).max(axis=0))
        delta = float(np.max(np.abs(new - values)))
        values = new
        yield it, values, delta
        if delta < cfg.tol:
            return


def solve_grid(problem: Problem, cfg: GridConfig = None) -> Solution:
    cfg = cfg or GridConfig()
    grid = np.linspace(0.0, 1.0, cfg.grid_size)
    c = float(problem.cost)
    it, values, delta = 0, None, 0.0
    for it, values, delta in value_iteration(problem, cfg):
        pass
    converged = delta < cfg.tol
    if converged:
        log.debug(f'grid solve: {it} sweeps, final change {delta:.3e}')
    else:
        log.warning(f'grid solve did not converge: {it} sweeps, final '
                    f'change {delta:.3e} >= tol {cfg.tol:g}')

    stop = _stop_rows(problem, grid)
    if problem.consultants:
        kernel = _Kernel(problem, grid)
        branches = np.vstack([stop, kernel.consult_values(values, c,
                                                          fold=False)])
    else:
        branches = stop
    policy, ties = decide(problem, branches, cfg.tie_tol)
    return Solution(problem, grid, values, policy, ties, branches,
                    SolveMeta(SOLVER_GRID, it, delta, converged))


def bellman_backup(values: np.ndarray, problem: Problem, p: BeliefLike,
                   grid: np.ndarray = None, tie_tol: float = 1e-9
                   ) -> Tuple[float, Tuple[Decision, ...]]:
    '''One Bellman backup at ``p`` against a value table.

    ``grid`` defaults to equally spaced points matching ``values``;
    off-grid posteriors are linearly interpolated. Returns the best score
    and every decision within ``tie_tol`` of it, tie-break order first.
    '''
    values = np.asarray(values, dtype=float)
    if grid is None:
        grid = np.linspace(0.0, 1.0, len(values))
    p = _p(p)
    u = problem.payoffs
    c = float(problem.cost)
    scores = [p * float(u.u_Rr), (1.0 - p) * float(u.u_Ll)]
    for j in problem.consultants:
        acc = 0.0
        for s in j.signals:
            prob = signal_prob(p, j, s)
            if prob <= 0.0:
                continue
            acc += prob * float(np.interp(posterior(p, j, s).p, grid,
                                          values))
        scores.append(acc - c)
    ties = order_ties(scores, branch_decisions(problem), tie_tol)
    return max(scores), ties


class GridSolver(Solver):

    def __init__(self, cfg: GridConfig = None):
        super().__init__(SOLVER_GRID)
        self.cfg = cfg or GridConfig()

    def solve(self, problem: Problem) -> Solution:
        return solve_grid(problem, self.cfg)
