# Copyright (c) 2024 consult contributors
#
# SPDX-License-Identifier: Apache-2.0

import argparse
from contextlib import contextmanager
import csv
from dataclasses import asdict
import json
import logging
import sys
from typing import IO, Iterator, Optional, Union

from consult.document import (ProblemDocument, SolverSection,
                              parse_problem)
from consult.errors import ConsultError, InvalidProblem, SchemaError
from consult.model import Problem
from consult.montecarlo import (SolutionPolicy, decomposition_check,
                                simulate_policy)
from consult.solver import (GridConfig, LatticeConfig, SOLVER_AUTO, SOLVERS,
                            Solution, detect_rational_ratio, solve,
                            thresholds, value_at)
from consult.solver.lattice import piecewise_extract
from consult.theory import brute_force_value, revealing_cost_threshold
from consult.util import doc as field_doc, fmt
from consult.version import __version__

log = logging.getLogger('consult')

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NOT_CONVERGED = 3

# Per-module levels; -v lowers the solver entries to DEBUG
LEVELS = {
    'consult.model': logging.INFO,
    'consult.document': logging.INFO,
    'consult.solver': logging.INFO,
    'consult.grid': logging.INFO,
    'consult.lattice': logging.INFO,
    'consult.theory': logging.INFO,
    'consult.montecarlo': logging.INFO,
}
VERBOSE = ('consult.solver', 'consult.grid', 'consult.lattice',
           'consult.theory')

commands = dict()


def command(name: str, help: str):
    def wrapper(fn):
        fn.help = help
        commands[name] = fn
        return fn
    return wrapper


def die(msg: str):
    print(msg, file=sys.stderr)
    sys.exit(1)


def init_logging(verbose: bool = False):
    # Set the consult root level: process everything
    log.setLevel(logging.DEBUG)
    for h in list(log.handlers):
        log.removeHandler(h)
    formatter = logging.Formatter(style='{', fmt='{asctime}.{msecs:03.0f}:'
                                  '{module:4.4}:'
                                  '{levelname:3.3}: {message}',
                                  datefmt='%H:%M:%S')
    # Stream handler for DEBUG and INFO records
    ch = logging.StreamHandler(sys.stderr)
    ch.setFormatter(formatter)
    ch.addFilter(lambda record: record.levelno <= logging.INFO)
    ch.setLevel(logging.DEBUG)
    log.addHandler(ch)
    # Stream handler for WARNING, ERROR and CRITICAL records
    ch = logging.StreamHandler(sys.stderr)
    ch.setFormatter(formatter)
    ch.setLevel(logging.WARNING)
    log.addHandler(ch)

    for name, level in LEVELS.items():
        if verbose and name in VERBOSE:
            level = logging.DEBUG
        logging.getLogger(name).setLevel(level)


@contextmanager
def _output(dest: Union[str, IO, None]) -> Iterator[IO]:
    if dest is None or dest == '-':
        yield sys.stdout
    elif isinstance(dest, str):
        with open(dest, 'w', newline='', encoding='utf-8') as fp:
            yield fp
    else:
        yield dest


def export_value_csv(solution: Solution, dest: Union[str, IO, None]):
    '''One row per point: belief, value, tie-broken decision and the
    pipe-separated tie set.'''
    with _output(dest) as fp:
        w = csv.writer(fp, lineterminator='\n')
        w.writerow(['p', 'value', 'decision', 'ties'])
        for p, v, d, ties in zip(solution.grid, solution.values,
                                 solution.policy, solution.ties):
            w.writerow([fmt(p), fmt(v), d.label,
                        '|'.join(t.label for t in ties)])


def _configs(args, doc: ProblemDocument):
    section = doc.solver or SolverSection()
    grid_cfg = section.grid_config(grid_size=args.grid_size, tol=args.tol)
    lattice_cfg = LatticeConfig(max_iters=section.max_iters)
    return grid_cfg, lattice_cfg


def _solve(args, problem: Problem, doc: ProblemDocument) -> Solution:
    grid_cfg, lattice_cfg = _configs(args, doc)
    sol = solve(problem, args.solver, grid_cfg, lattice_cfg)
    log.info(f'{sol.meta.kind} solve: {len(sol.grid)} points, '
             f'{sol.meta.iterations} sweeps')
    return sol


def _status(*solutions: Solution) -> int:
    if all(s.meta.converged for s in solutions):
        return EXIT_OK
    return EXIT_NOT_CONVERGED


@command('solve', 'value and policy table as CSV')
def cmd_solve(args, problem, doc) -> int:
    sol = _solve(args, problem, doc)
    export_value_csv(sol, args.output)
    return _status(sol)


@command('thresholds', 'print the stopping thresholds p_L and p_R')
def cmd_thresholds(args, problem, doc) -> int:
    sol = _solve(args, problem, doc)
    t = thresholds(sol)
    with _output(args.output) as fp:
        print(f'p_L={fmt(t.p_L)}', file=fp)
        print(f'p_R={fmt(t.p_R)}', file=fp)
    return _status(sol)


def _costs(text: str):
    try:
        costs = [float(x) for x in text.split(',') if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f'invalid cost list {text!r}') \
            from None
    if not costs or any(c <= 0 for c in costs):
        raise argparse.ArgumentTypeError('costs must be positive')
    return costs


@command('sweep', 'value curves for several costs as long CSV')
def cmd_sweep(args, problem, doc) -> int:
    sols = [_solve(args, problem.with_cost(c), doc) for c in args.costs]
    with _output(args.output) as fp:
        w = csv.writer(fp, lineterminator='\n')
        w.writerow(['cost', 'p', 'value', 'decision'])
        for c, sol in zip(args.costs, sols):
            for p, v, d in zip(sol.grid, sol.values, sol.policy):
                w.writerow([fmt(c), fmt(p), fmt(v), d.label])
    return _status(*sols)


@command('piecewise', 'affine segments of the exact value over priors')
def cmd_piecewise(args, problem, doc) -> int:
    spec = detect_rational_ratio(problem.consultants)
    if spec is None:
        die('consultants have no rational ratio')
    _, lattice_cfg = _configs(args, doc)
    pw = piecewise_extract(problem, spec, cfg=lattice_cfg)
    with _output(args.output) as fp:
        w = csv.writer(fp, lineterminator='\n')
        w.writerow(['start', 'end', 'slope', 'intercept', 'residual',
                    'breakpoint'])
        breaks = list(pw.breakpoints) + [None]
        for seg, b in zip(pw.segments, breaks):
            w.writerow([fmt(seg.start), fmt(seg.end), fmt(seg.slope),
                        fmt(seg.intercept), f'{seg.residual:.3g}',
                        '' if b is None else fmt(b)])
    log.info(f'{len(pw.segments)} segments')
    return EXIT_OK


@command('simulate', 'Monte Carlo estimate of the solved policy')
def cmd_simulate(args, problem, doc) -> int:
    sol = _solve(args, problem, doc)
    report = simulate_policy(problem, SolutionPolicy(sol), args.runs,
                             args.seed)
    out = asdict(report)
    out['solver_value'] = value_at(sol, problem.prior)
    out['decomposition_residual'] = decomposition_check(report, problem)
    with _output(args.output) as fp:
        print(json.dumps(out, indent=2), file=fp)
    return _status(sol)


@command('oracle', 'brute-force value with a bounded number of consultations')
def cmd_oracle(args, problem, doc) -> int:
    res = brute_force_value(problem, args.horizon)
    with _output(args.output) as fp:
        print(f'value={fmt(res.value)}', file=fp)
        print(f'decisions={"|".join(d.label for d in res.decisions)}',
              file=fp)
    return EXIT_OK


@command('theorem1', 'cost below which a revealing consultant is used')
def cmd_theorem1(args, problem, doc) -> int:
    if args.revealer:
        try:
            j = problem.consultant(args.revealer)
        except KeyError as e:
            die(str(e))
    else:
        j = next((j for j in problem.consultants if j.is_revealing()), None)
        if j is None:
            die('no revealing consultant')
    grid_cfg, lattice_cfg = _configs(args, doc)
    res = revealing_cost_threshold(problem, j, kind=args.solver,
                                   grid_cfg=grid_cfg,
                                   lattice_cfg=lattice_cfg)
    with _output(args.output) as fp:
        print(f'revealer={j.id}', file=fp)
        print(f'epsilon={fmt(res.epsilon)}', file=fp)
        print(f'C_bound={fmt(res.C_bound)}', file=fp)
        print(f'C={fmt(res.C)}', file=fp)
        print(f'verified={"yes" if res.verified else "no"}', file=fp)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='consult',
        description='Solve two-state investment problems with costly '
                    'consultants.')
    parser.add_argument('--version', action='version',
                        version=f'consult {__version__}')
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('problem', help='JSON problem document')
    common.add_argument('--solver', choices=SOLVERS, default=SOLVER_AUTO,
                        help='value solver (default: %(default)s)')
    common.add_argument('--grid-size', type=int, default=None,
                        help=field_doc(GridConfig, 'grid_size'))
    common.add_argument('--tol', type=float, default=None,
                        help=field_doc(GridConfig, 'tol'))
    common.add_argument('-o', '--output', default=None,
                        help='output file (default: stdout)')
    common.add_argument('-v', '--verbose', action='store_true',
                        help='debug logging for the solvers')

    sub = parser.add_subparsers(dest='command', metavar='COMMAND')
    sub.required = True
    for name, fn in commands.items():
        p = sub.add_parser(name, parents=[common], help=fn.help)
        if name == 'sweep':
            p.add_argument('--costs', type=_costs, required=True,
                           help='comma-separated costs')
        elif name == 'simulate':
            p.add_argument('--runs', type=int, default=100000)
            p.add_argument('--seed', type=int, default=0)
        elif name == 'oracle':
            p.add_argument('--horizon', type=int, default=4)
        elif name == 'theorem1':
            p.add_argument('--revealer', default=None,
                           help='revealing consultant id (default: first)')
    return parser


def run(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    init_logging(args.verbose)
    log.debug(f'consult {__version__}')
    try:
        problem, doc = parse_problem(args.problem)
    except InvalidProblem as e:
        for v in e.violations:
            log.error(v.message)
        return EXIT_INVALID
    except (SchemaError, OSError) as e:
        die(str(e))
    try:
        return commands[args.command](args, problem, doc)
    except ConsultError as e:
        die(str(e))


def main(argv: Optional[list] = None):
    sys.exit(run(argv))
