# Copyright (c) 2024 consult contributors
#
# SPDX-License-Identifier: Apache-2.0

import logging

from ..model import Problem
from .base import (SOLVER_AUTO, SOLVER_GRID, SOLVER_LATTICE, SOLVERS,
                   Solution, SolveMeta, Solver, Thresholds, thresholds,
                   value_at)
from .grid import GridConfig, GridSolver, solve_grid
from .lattice import (LatticeConfig, LatticeSolver, LatticeSpec,
                      detect_rational_ratio, solve_lattice)

log = logging.getLogger('consult.solver')


def make_solver(kind: str, problem: Problem, grid_cfg: GridConfig = None,
                lattice_cfg: LatticeConfig = None) -> Solver:
    '''Solver of the requested kind; ``auto`` picks the lattice solver when
    the consultants have a rational ratio.'''
    if kind == SOLVER_GRID:
        return GridSolver(grid_cfg)
    if kind == SOLVER_LATTICE:
        return LatticeSolver(lattice_cfg)
    if kind == SOLVER_AUTO:
        spec = detect_rational_ratio(problem.consultants)
        if spec is not None:
            log.debug(f'auto: rational ratio with Q={spec.Q:.6g}')
            return LatticeSolver(lattice_cfg, spec)
        log.debug('auto: no rational ratio, using the grid')
        return GridSolver(grid_cfg)
    raise ValueError(f'unknown solver kind {kind!r}')


def solve(problem: Problem, kind: str = SOLVER_AUTO,
          grid_cfg: GridConfig = None,
          lattice_cfg: LatticeConfig = None) -> Solution:
    return make_solver(kind, problem, grid_cfg, lattice_cfg).solve(problem)
