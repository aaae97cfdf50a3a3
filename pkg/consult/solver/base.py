# Copyright (c) 2024 consult contributors
#
# SPDX-License-Identifier: Apache-2.0

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..errors import UnmappedBelief
from ..model import (BeliefLike, Decision, Problem, STOP_L, STOP_R,
                     _p, stopping_value)

SOLVER_GRID = 'grid'
SOLVER_LATTICE = 'lattice'
SOLVER_AUTO = 'auto'
SOLVERS = (SOLVER_GRID, SOLVER_LATTICE, SOLVER_AUTO)

# Distance within which a belief reads a lattice point
LATTICE_ATOL = 1e-9


@dataclass(frozen=True)
class SolveMeta:
    kind: str
    iterations: int
    delta: float
    converged: bool


@dataclass(frozen=True, eq=False)
class Solution:
    '''Value function and Markovian policy on a finite set of beliefs.

    ``branches`` holds one row per backup branch, in the order stop R,
    stop L, then each consultant in problem order. ``ties[i]`` lists every
    branch within the tie tolerance of the best one, in tie-break order, so
    ``policy[i] == ties[i][0]``. With ``band`` set, beliefs outside it are
    absorbing and take the better stopping decision.
    '''
    problem: Problem
    grid: np.ndarray
    values: np.ndarray
    policy: Tuple[Decision, ...]
    ties: Tuple[Tuple[Decision, ...], ...]
    branches: np.ndarray
    meta: SolveMeta
    band: Optional[Tuple[float, float]] = None

    def index_of(self, p: BeliefLike) -> int:
        '''Index of the grid point nearest to ``p``.'''
        p = _p(p)
        i = int(np.searchsorted(self.grid, p))
        if i == 0:
            return 0
        if i >= len(self.grid):
            return len(self.grid) - 1
        return i if self.grid[i] - p < p - self.grid[i - 1] else i - 1

    def in_band(self, p: BeliefLike) -> bool:
        return self.band is None or self.band[0] <= _p(p) <= self.band[1]

    def point_of(self, p: BeliefLike) -> int:
        '''Index of the point that answers for ``p`` inside the band.

        Grid tables answer with the nearest point. Lattice tables are exact
        on reachable beliefs only, so a belief farther than
        ``LATTICE_ATOL`` from every lattice point raises UnmappedBelief.
        '''
        i = self.index_of(p)
        if (self.meta.kind == SOLVER_LATTICE
                and abs(float(self.grid[i]) - _p(p)) > LATTICE_ATOL):
            raise UnmappedBelief(f'belief {_p(p)!r} is not a lattice point')
        return i

    def decision_at(self, p: BeliefLike) -> Decision:
        p = _p(p)
        if not self.in_band(p):
            u = self.problem.payoffs
            return (STOP_R if p * float(u.u_Rr) >= (1 - p) * float(u.u_Ll)
                    else STOP_L)
        return self.policy[self.point_of(p)]

    def ties_at(self, p: BeliefLike) -> Tuple[Decision, ...]:
        return self.ties[self.index_of(p)]

    def consult_row(self, id: str) -> np.ndarray:
        return self.branches[2 + self.problem.ids.index(id)]


@dataclass(frozen=True)
class Thresholds:
    p_L: float
    p_R: float


def branch_decisions(problem: Problem) -> List[Decision]:
    return [STOP_R, STOP_L] + [Decision.consult(j.id)
                               for j in problem.consultants]


def order_ties(scores: Sequence[float], decisions: Sequence[Decision],
               tie_tol: float) -> Tuple[Decision, ...]:
    '''Branches within ``tie_tol`` of the best, in tie-break order.

    Stopping wins ties: the better stopping branch first (R at exact
    stop-stop ties), then consultants in problem order.
    '''
    best = max(scores)
    near = [i for i, v in enumerate(scores) if v >= best - tie_tol]
    stops = sorted((i for i in near if i < 2), key=lambda i: (-scores[i], i))
    return tuple(decisions[i] for i in stops + [i for i in near if i >= 2])


def decide(problem: Problem, branches: np.ndarray, tie_tol: float):
    '''Per-column policy and tie sets of a branch table.'''
    decisions = branch_decisions(problem)
    ties = tuple(order_ties(branches[:, i].tolist(), decisions, tie_tol)
                 for i in range(branches.shape[1]))
    policy = tuple(t[0] for t in ties)
    return policy, ties


def value_at(solution: Solution, p: BeliefLike) -> float:
    '''Value at ``p``: linear interpolation on a grid, exact at grid points.

    A lattice table answers at its points and, outside the consult band,
    with the stopping value; anywhere else it raises UnmappedBelief.
    '''
    p = _p(p)
    if solution.meta.kind == SOLVER_LATTICE:
        if not solution.in_band(p):
            return stopping_value(p, solution.problem.payoffs)
        return float(solution.values[solution.point_of(p)])
    return float(np.interp(p, solution.grid, solution.values))


def thresholds(solution: Solution) -> Thresholds:
    '''``p_L`` is the last point of the run of StopL-optimal points starting
    at 0, ``p_R`` the first point of the StopR run ending at 1.'''
    grid = solution.grid
    n = len(grid)
    k = 0
    while k < n and STOP_L in solution.ties[k]:
        k += 1
    p_L = float(grid[k - 1]) if k > 0 else 0.0
    k = n - 1
    while k >= 0 and STOP_R in solution.ties[k]:
        k -= 1
    p_R = float(grid[k + 1]) if k < n - 1 else 1.0
    return Thresholds(p_L, p_R)


class Solver(ABC):
    '''Abstract superclass for a value-function solver.'''

    def __init__(self, name: str):
        self.name = name

    @abstractmethod
    def solve(self, problem: Problem) -> Solution:
        '''Solve ``problem`` and return its value table and policy.'''

    def __repr__(self):
        return f'{self.__class__.__name__}({self.name})'
