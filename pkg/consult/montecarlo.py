# Copyright (c) 2024 consult contributors
#
# SPDX-License-Identifier: Apache-2.0

'''Seeded Monte Carlo evaluation of Markovian policies.

Runs are simulated in fixed-size blocks, each with its own counter-based
Philox generator derived from the seed and the block index, so a report
does not depend on how blocks are scheduled.

The mean payoff is post-stratified by the true state:
``p0*mean_r + (1 - p0)*mean_l``. That makes the linear split into
``P_r, P_l, E_r, E_l`` an identity on the sample.
'''

from dataclasses import dataclass
from functools import lru_cache
import logging
import math
from typing import List, Optional, Tuple
try:
    from typing import Protocol
except ImportError:
    from typing_extensions import Protocol

import numpy as np

from .errors import ParameterRange
from .model import (Decision, Problem, STATE_L, STATE_R, STOP_L, STOP_R,
                    posterior, posterior_many)
from .solver import Solution
from .util import cost_cap

log = logging.getLogger('consult.montecarlo')

BLOCK = 4096
MEMO_SIZE = 1 << 16


class Policy(Protocol):
    def __call__(self, p: float) -> Decision:
        ...


def _better_stop(problem: Problem, p: float) -> Decision:
    u = problem.payoffs
    return STOP_R if p * float(u.u_Rr) >= (1 - p) * float(u.u_Ll) else STOP_L


class SolutionPolicy:
    '''The policy of a solved table, read through ``decision_at``.

    Lattice tables are exact on reachable beliefs only; a belief inside the
    consult band that is not a lattice point raises UnmappedBelief. The
    last ``memo_size`` lookups are cached.
    '''

    def __init__(self, solution: Solution, memo_size: int = MEMO_SIZE):
        self.solution = solution
        self._lookup = lru_cache(maxsize=memo_size)(solution.decision_at)

    def __call__(self, p: float) -> Decision:
        return self._lookup(p)


class never_consult:
    '''Stop at once with the better action.'''

    def __init__(self, problem: Problem):
        self.problem = problem

    def __call__(self, p: float) -> Decision:
        return _better_stop(self.problem, p)


class consult_until_reveal:
    '''Consult ``id`` until the belief is 0 or 1, then act.'''

    def __init__(self, problem: Problem, id: str):
        self.problem = problem
        self.target = Decision.consult(problem.consultant(id).id)

    def __call__(self, p: float) -> Decision:
        if 0.0 < p < 1.0:
            return self.target
        return _better_stop(self.problem, p)


@dataclass(frozen=True)
class SimulationReport:
    runs: int
    mean_payoff: float
    std_error: float
    P_r: float
    P_l: float
    E_r: float
    E_l: float
    seed: int
    prior: float = 0.5
    truncated: int = 0
    runs_r: int = 0
    runs_l: int = 0


@dataclass(frozen=True)
class TraceStep:
    consultant: str
    signal: str
    posterior: float


@dataclass(frozen=True)
class SimulationTrace:
    state: str
    steps: Tuple[TraceStep, ...]
    action: Decision
    cost: float
    truncated: bool = False


class _Sampler:
    '''Cumulative signal rows per consultant and state.'''

    def __init__(self, problem: Problem):
        self.codes = {STOP_R: 0, STOP_L: 1}
        self.rows = []
        for k, j in enumerate(problem.consultants):
            self.codes[Decision.consult(j.id)] = 2 + k
            self.rows.append((
                np.cumsum([float(x) for x in j.probs_r]),
                np.cumsum([float(x) for x in j.probs_l]),
                [j.likelihoods(s) for s in j.signals]))

    def draw(self, k: int, in_r: np.ndarray, u: np.ndarray) -> np.ndarray:
        cr, cl, _ = self.rows[k]
        cum = np.where(in_r[:, None], cr[None, :], cl[None, :])
        return np.minimum((u[:, None] >= cum).sum(axis=1), len(cr) - 1)


def _run_block(problem: Problem, policy: Policy, sampler: _Sampler, n: int,
               rng: np.random.Generator, max_steps: int, state_prior: float):
    in_r = rng.random(n) < state_prior
    p = np.full(n, float(problem.prior))
    steps = np.zeros(n, dtype=np.int64)
    action = np.full(n, -1, dtype=np.int64)
    cut = np.zeros(n, dtype=bool)
    active = np.ones(n, dtype=bool)
    for step in range(max_steps + 1):
        idx = np.flatnonzero(active)
        if not len(idx):
            break
        uniq, inv = np.unique(p[idx], return_inverse=True)
        try:
            codes = np.array([sampler.codes[policy(float(x))]
                              for x in uniq])[inv]
        except KeyError as e:
            raise ParameterRange(f'policy returned unknown decision {e}') \
                from None
        if step == max_steps:
            over = codes >= 2
            cut[idx[over]] = True
            forced = np.array([sampler.codes[_better_stop(problem,
                                                          float(x))]
                               for x in p[idx]])
            codes = np.where(over, forced, codes)
        for code in (0, 1):
            done = idx[codes == code]
            action[done] = code
            active[done] = False
        for k in range(len(sampler.rows)):
            sel = idx[codes == 2 + k]
            if not len(sel):
                continue
            sig = sampler.draw(k, in_r[sel], rng.random(len(sel)))
            steps[sel] += 1
            for i, (lr, ll) in enumerate(sampler.rows[k][2]):
                hit = sel[sig == i]
                if len(hit):
                    p[hit] = posterior_many(p[hit], lr, ll)
    return in_r, action, steps, cut


def simulate_policy(problem: Problem, policy: Policy, runs: int,
                    seed: int = 0, max_steps: Optional[int] = None,
                    block: int = BLOCK, state_prior: Optional[float] = None
                    ) -> SimulationReport:
    '''Estimate the payoff of ``policy`` from ``runs`` sampled states and
    signal paths.

    Runs still consulting after ``max_steps`` (``ceil(50/c)`` by default)
    are forced to the better stopping action and counted in ``truncated``.

    ``state_prior`` draws the true state from another prior while beliefs
    still start at the problem's prior, which keeps the strategy fixed as a
    function of the signal history.
    '''
    if runs < 1:
        raise ParameterRange(f'runs {runs} < 1')
    if block < 1:
        raise ParameterRange(f'block {block} < 1')
    c = float(problem.cost)
    if max_steps is None:
        max_steps = cost_cap(c, 50)
    p0 = float(problem.prior if state_prior is None else state_prior)
    if not 0.0 <= p0 <= 1.0:
        raise ParameterRange(f'state prior {p0} outside [0, 1]')
    sampler = _Sampler(problem)
    parts = []
    for b, start in enumerate(range(0, runs, block)):
        rng = np.random.Generator(np.random.Philox(
            np.random.SeedSequence(seed, spawn_key=(b,))))
        parts.append(_run_block(problem, policy, sampler,
                                min(block, runs - start), rng, max_steps,
                                p0))
    in_r, action, steps, cut = (np.concatenate(x) for x in zip(*parts))

    u = problem.payoffs
    right_r = in_r & (action == 0)
    right_l = ~in_r & (action == 1)
    gain = np.where(right_r, float(u.u_Rr), 0.0) + \
        np.where(right_l, float(u.u_Ll), 0.0)
    pay = gain - c * steps

    def stratum(mask, right):
        n = int(mask.sum())
        if not n:
            return n, 0.0, 0.0, 0.0
        x = pay[mask]
        var = float(x.var(ddof=1)) if n > 1 else 0.0
        return (n, float(right[mask].mean()), float(steps[mask].mean()),
                var / n)

    n_r, P_r, E_r, v_r = stratum(in_r, right_r)
    n_l, P_l, E_l, v_l = stratum(~in_r, right_l)
    if (0.0 < p0 < 1.0) and not (n_r and n_l):
        log.warning('one state was never drawn; its stratum counts as 0')
    mean = (p0 * (float(u.u_Rr) * P_r - c * E_r)
            + (1.0 - p0) * (float(u.u_Ll) * P_l - c * E_l))
    se = math.sqrt(p0 * p0 * v_r + (1.0 - p0) ** 2 * v_l)
    truncated = int(cut.sum())
    if truncated:
        log.warning(f'{truncated} of {runs} runs hit max_steps={max_steps}')
    log.debug(f'simulated {runs} runs: mean {mean:.6g} +- {se:.2g}')
    return SimulationReport(runs, mean, se, P_r, P_l, E_r, E_l, seed, p0,
                            truncated, n_r, n_l)


def predict_payoff(report: SimulationReport, problem: Problem,
                   prior: float = None) -> float:
    '''Payoff at ``prior`` (the report's by default) implied by the
    report's per-state statistics, which do not depend on the prior or the
    cost.'''
    p = float(report.prior if prior is None else prior)
    u = problem.payoffs
    c = float(problem.cost)
    return (float(u.u_Rr) * report.P_r * p
            + float(u.u_Ll) * report.P_l * (1.0 - p)
            - (report.E_r * p + report.E_l * (1.0 - p)) * c)


def decomposition_check(report: SimulationReport, problem: Problem) -> float:
    return abs(report.mean_payoff - predict_payoff(report, problem))


def trace_policy(problem: Problem, policy: Policy, seed: int = 0,
                 max_steps: Optional[int] = None) -> SimulationTrace:
    '''One run with every consultation recorded.'''
    c = float(problem.cost)
    if max_steps is None:
        max_steps = cost_cap(c, 50)
    rng = np.random.default_rng(seed)
    p = float(problem.prior)
    state = STATE_R if rng.random() < p else STATE_L
    steps: List[TraceStep] = []
    while True:
        d = policy(p)
        if not d.is_stop and len(steps) >= max_steps:
            return SimulationTrace(state, tuple(steps),
                                   _better_stop(problem, p),
                                   c * len(steps), True)
        if d.is_stop:
            return SimulationTrace(state, tuple(steps), d, c * len(steps))
        j = problem.consultant(d.consultant)
        row = np.array([float(x) for x in j.row(state)])
        s = j.signals[int(rng.choice(len(row), p=row / row.sum()))]
        p = posterior(p, j, s).p
        steps.append(TraceStep(j.id, s, p))
