# Copyright (c) 2024 consult contributors
#
# SPDX-License-Identifier: Apache-2.0

'''Revealing consultants, three-signal reductions and a brute-force oracle.

The oracle enumerates every strategy tree up to a horizon and is the ground
truth the solvers are checked against on small instances.
'''

from dataclasses import dataclass, field
import logging
import math
from typing import (Callable, Dict, FrozenSet, Iterable, List, Optional,
                    Sequence, Tuple)

import numpy as np

from .errors import (NotRevealing, ParameterRange, PreconditionError,
                     RevealingInNonRevealers, SizeGuardError)
from .model import (Consultant, Decision, Number, Problem, SIGNAL_L,
                    SIGNAL_R, STATE_L, STATE_R, THREE_SIGNALS, expit,
                    is_symmetric, logit, posterior, signal_prob)
from .solver import (GridConfig, LatticeConfig, SOLVER_AUTO, Solution,
                     solve, value_at)
from .solver.base import branch_decisions, order_ties
from .util import cost_cap

log = logging.getLogger('consult.theory')

# Oracle size guard
MAX_HORIZON = 8
MAX_CONSULTANTS = 3
MAX_SIGNALS = 4

BAND_TOL = 1e-7

NO_CONSULT = 'NoConsult'
ONLY_REVEALER = 'OnlyRevealer'
NEVER_REVEALER = 'NeverRevealer'


@dataclass(frozen=True)
class ThreeSignalParams:
    '''Consultant that is silent with probability ``1 - t`` and otherwise
    matches the state with probability ``q``.'''
    q: Number
    t: Number

    def __post_init__(self):
        if not 0.5 < self.q <= 1:
            raise ParameterRange(f'q = {self.q} outside (0.5, 1]')
        if not 0 < self.t <= 1:
            raise ParameterRange(f't = {self.t} outside (0, 1]')

    @property
    def is_revealer(self) -> bool:
        return self.q == 1

    @property
    def is_estimator(self) -> bool:
        return self.t == 1


def make_three_signal(params: ThreeSignalParams, id: str = 'j'
                      ) -> Consultant:
    q, t = params.q, params.t
    match, miss, null = q * t, (1 - q) * t, 1 - t
    return Consultant(id, THREE_SIGNALS, (match, miss, null),
                      (miss, match, null))


def three_signal_params(j: Consultant) -> Optional[ThreeSignalParams]:
    '''``(q, t)`` of a symmetric three-signal consultant, else None.'''
    if set(j.signals) != set(THREE_SIGNALS) or not is_symmetric(j):
        return None
    match = j.likelihood(SIGNAL_R, STATE_R)
    miss = j.likelihood(SIGNAL_L, STATE_R)
    t = match + miss
    if t <= 0 or match <= miss:
        return None
    return ThreeSignalParams(match / t, t)


def qt_reduce(params: ThreeSignalParams, c: Number
              ) -> Tuple[ThreeSignalParams, Number]:
    '''The equivalent never-silent consultant and its cost ``c/t``.'''
    if not c > 0:
        raise ParameterRange(f'cost {c} must be positive')
    return ThreeSignalParams(params.q, 1), c / params.t


def dominates(a: ThreeSignalParams, b: ThreeSignalParams) -> bool:
    '''``a`` is at least as accurate and as talkative as ``b``, and strictly
    better in one.'''
    return a.q >= b.q and a.t >= b.t and (a.q > b.q or a.t > b.t)


def prune_dominated(consultants: Sequence[Consultant]) -> List[Consultant]:
    params = {j.id: three_signal_params(j) for j in consultants}
    out = []
    for j in consultants:
        pj = params[j.id]
        if pj is not None and any(
                pi is not None and dominates(pi, pj)
                for i, pi in params.items() if i != j.id):
            log.debug(f'{j.id} is dominated')
            continue
        out.append(j)
    return out


def expected_net_count_steps(q: float, k: int) -> float:
    '''Expected consultations of a (q, 1) estimator until the net count of r
    over l signals reaches +-k.'''
    if k < 0:
        raise ParameterRange(f'k = {k} is negative')
    q = float(q)
    if k == 0:
        return 0.0
    if q == 0.5:
        return float(k * k)
    # Gambler's ruin from k on [0, 2k]
    r = (1.0 - q) / q
    drift = (1.0 - q) - q
    return k / drift - (2 * k / drift) * (1 - r ** k) / (1 - r ** (2 * k))


def net_count_value(q: float, k: int, c: float) -> float:
    '''Value at prior 1/2, symmetric unit payoffs, of consulting a (q, 1)
    estimator until the net count reaches +-k.'''
    q = float(q)
    right = q ** k / (q ** k + (1.0 - q) ** k)
    return right - float(c) * expected_net_count_steps(q, k)


@dataclass(frozen=True)
class OracleResult:
    value: float
    decisions: Tuple[Decision, ...]


def brute_force_value(problem: Problem, horizon: int,
                      tie_tol: float = 1e-9) -> OracleResult:
    '''Exact expectimax over strategies that consult at most ``horizon``
    times.

    A lower bound on the value, exact whenever some optimal strategy never
    consults more than ``horizon`` times.
    '''
    if horizon < 0:
        raise ParameterRange(f'horizon {horizon} is negative')
    nsig = max((len(j.signals) for j in problem.consultants), default=0)
    if (horizon > MAX_HORIZON or len(problem.consultants) > MAX_CONSULTANTS
            or nsig > MAX_SIGNALS):
        raise SizeGuardError(
            f'oracle limited to horizon <= {MAX_HORIZON}, '
            f'{MAX_CONSULTANTS} consultants, {MAX_SIGNALS} signals')
    u_R = float(problem.payoffs.u_Rr)
    u_L = float(problem.payoffs.u_Ll)
    c = float(problem.cost)
    memo = {}

    def scores(p: float, h: int) -> List[float]:
        out = [p * u_R, (1.0 - p) * u_L]
        if h > 0:
            for j in problem.consultants:
                acc = 0.0
                for s in j.signals:
                    prob = signal_prob(p, j, s)
                    if prob > 0.0:
                        acc += prob * value(posterior(p, j, s).p, h - 1)
                out.append(acc - c)
        return out

    def value(p: float, h: int) -> float:
        key = (p, h)
        if key not in memo:
            memo[key] = max(scores(p, h))
        return memo[key]

    top = scores(float(problem.prior), horizon)
    decisions = branch_decisions(problem)[:len(top)]
    ties = order_ties(top, decisions, tie_tol)
    log.debug(f'oracle horizon {horizon}: {len(memo)} nodes')
    return OracleResult(max(top), ties)


@dataclass(frozen=True)
class AffineBound:
    '''``c -> intercept + slope * c``.'''
    intercept: float
    slope: float

    def __call__(self, c: float) -> float:
        return self.intercept + self.slope * float(c)


def revealer_epsilon(j: Consultant) -> float:
    '''Smallest, over states, probability that ``j`` reveals the state.'''
    return min(j.revealing_mass(STATE_R), j.revealing_mass(STATE_L))


def revealer_lower_bound(problem: Problem, j_star: Consultant
                         ) -> AffineBound:
    '''Guaranteed payoff of consulting ``j_star`` until it reveals the
    state.'''
    eps = revealer_epsilon(j_star)
    if eps <= 0.0:
        raise NotRevealing(f'{j_star.id} does not reveal both states')
    p0 = float(problem.prior)
    u = problem.payoffs
    return AffineBound(p0 * float(u.u_Rr) + (1.0 - p0) * float(u.u_Ll),
                       -1.0 / eps)


def _max_q(consultants: Iterable[Consultant]) -> float:
    q = 0.5
    for j in consultants:
        if j.reveals_any():
            raise RevealingInNonRevealers(f'{j.id} has a revealing signal')
        for s, a, b in zip(j.signals, j.probs_r, j.probs_l):
            if a + b > 0:
                q = max(q, float(a) / float(a + b), float(b) / float(a + b))
    return q


def nonreveal_terms(problem: Problem, J_minus: Sequence[Consultant],
                    c: float) -> np.ndarray:
    '''Terms of the non-revealer bound for ``n = 0, 1, ...``.

    The range stops at ``ceil(u_max/c)`` or once the extreme posteriors
    saturate in double precision, whichever comes first; later terms only
    lose ``c`` each.
    '''
    c = float(c)
    if not c > 0:
        raise ParameterRange(f'cost {c} must be positive')
    q = _max_q(J_minus)
    p0 = float(problem.prior)
    u_R = float(problem.payoffs.u_Rr)
    u_L = float(problem.payoffs.u_Ll)
    n_max = cost_cap(c, problem.payoffs.max)
    if q == 0.5 or p0 in (0.0, 1.0):
        n_max = 0
    elif q < 1.0:
        step = math.log(q / (1.0 - q))
        n_max = min(n_max, int(math.ceil((abs(logit(p0)) + 40.0) / step)))
    n = np.arange(n_max + 1)
    if n_max:
        x0 = logit(p0)
        hi = np.array([expit(x0 + k * step) for k in n])
        lo = np.array([expit(x0 - k * step) for k in n])
    else:
        hi = lo = np.full(1, p0)
    return np.maximum(p0 * u_R * hi - c * n,
                      (1.0 - p0) * u_L * (1.0 - lo) - c * n)


def nonreveal_upper_bound(problem: Problem, J_minus: Sequence[Consultant],
                          c: float) -> float:
    '''Upper bound on the payoff of any strategy that consults only
    ``J_minus``: the largest of the ``nonreveal_terms``.

    The stake multiplies the posterior, so the bound is conservative; the
    cost threshold built on it is checked empirically.
    '''
    return float(np.max(nonreveal_terms(problem, J_minus, c)))


def reachable_decisions(solution: Solution,
                        avoid: FrozenSet[str] = frozenset(),
                        max_visits: int = 100000) -> FrozenSet[Decision]:
    '''Decisions the solved Markov policy takes at beliefs reachable from
    the prior with positive probability.

    ``avoid`` resolves ties away from the named consultants where another
    optimal branch exists.
    '''
    problem = solution.problem
    frontier = [float(problem.prior)]
    seen = set()
    out = set()
    while frontier and len(seen) < max_visits:
        p = frontier.pop()
        if not solution.in_band(p):
            out.add(solution.decision_at(p))
            continue
        i = solution.index_of(p)
        if i in seen:
            continue
        seen.add(i)
        d = solution.policy[i]
        if avoid and not d.is_stop and d.consultant in avoid:
            d = next((t for t in solution.ties[i]
                      if t.is_stop or t.consultant not in avoid), d)
        out.add(d)
        if d.is_stop:
            continue
        j = problem.consultant(d.consultant)
        for s in j.signals:
            if signal_prob(p, j, s) > 0.0:
                frontier.append(posterior(p, j, s).p)
    if frontier:
        log.warning(f'reachability stopped after {max_visits} beliefs')
    return frozenset(out)


def verify_revealer_usage(problem: Problem, j_star: Consultant,
                          costs: Sequence[float], kind: str = SOLVER_AUTO,
                          grid_cfg: GridConfig = None,
                          lattice_cfg: LatticeConfig = None
                          ) -> Dict[float, bool]:
    '''For each cost, whether the solved policy consults ``j_star`` at some
    belief reachable from the prior.'''
    target = Decision.consult(j_star.id)
    out = {}
    for c in costs:
        sol = solve(problem.with_cost(c), kind, grid_cfg, lattice_cfg)
        out[c] = target in reachable_decisions(sol)
        log.debug(f'c={c:.6g}: {j_star.id} '
                  f'{"used" if out[c] else "not used"}')
    return out


@dataclass(frozen=True)
class RevealerAnalysis:
    epsilon: float
    sigma_star_payoff: AffineBound
    nonreveal_bound: Callable[[float], float]
    C: float
    C_bound: float
    verified: bool
    checked: Dict[float, bool] = field(default_factory=dict)


def revealing_cost_threshold(problem: Problem, j_star: Consultant,
                             verify: bool = True, samples: int = 3,
                             max_halvings: int = 40,
                             kind: str = SOLVER_AUTO,
                             grid_cfg: GridConfig = None,
                             lattice_cfg: LatticeConfig = None
                             ) -> RevealerAnalysis:
    '''Largest cost below which the revealer bound beats the non-revealer
    bound, found by bisection to 1e-9.

    With ``verify`` the threshold is halved until the solved policies at
    ``C, C/2, ...`` (``samples`` costs) all consult ``j_star``.
    '''
    if not j_star.is_revealing():
        raise NotRevealing(f'{j_star.id} does not reveal both states')
    others = [j for j in problem.consultants if j.id != j_star.id]
    _max_q(others)
    lower = revealer_lower_bound(problem, j_star)
    eps = revealer_epsilon(j_star)
    u_max = problem.payoffs.max

    def upper(c):
        return nonreveal_upper_bound(problem, others, c)

    if not any(j.is_informative() for j in others):
        C_bound = u_max
    elif lower(u_max) >= upper(u_max):
        C_bound = u_max
    else:
        lo, hi = 0.0, u_max
        while hi - lo > 1e-9:
            mid = (lo + hi) / 2
            if lower(mid) >= upper(mid):
                lo = mid
            else:
                hi = mid
        C_bound = lo if lo > 0 else hi
    log.info(f'revealer {j_star.id}: eps={eps:.6g}, bound threshold '
             f'C={C_bound:.9g}')

    C = C_bound
    checked = {}
    verified = False
    if verify:
        for _ in range(max_halvings):
            costs = [C / 2 ** i for i in range(samples)]
            res = verify_revealer_usage(problem, j_star, costs, kind,
                                        grid_cfg, lattice_cfg)
            checked.update(res)
            if all(res.values()):
                verified = True
                break
            C /= 2
        if not verified:
            log.warning(f'revealer {j_star.id} not verified down to '
                        f'c={C:.3g}')
        else:
            log.info(f'revealer {j_star.id}: verified threshold C={C:.9g}')
    return RevealerAnalysis(eps, lower, upper, C, C_bound, verified,
                            checked)


@dataclass(frozen=True)
class RevealerBand:
    lo: float
    hi: float
    contiguous: bool
    symmetric: bool


def revealer_band(solution: Solution, t: float, c: float,
                  band_tol: float = BAND_TOL) -> Optional[RevealerBand]:
    '''Beliefs where the value equals the consult-until-reveal payoff
    ``1 - c/t``; None if there are none.'''
    target = 1.0 - float(c) / float(t)
    idx = np.flatnonzero(np.abs(solution.values - target) < band_tol)
    if not len(idx):
        return None
    grid = solution.grid
    lo, hi = float(grid[idx[0]]), float(grid[idx[-1]])
    contiguous = bool(idx[-1] - idx[0] + 1 == len(idx))
    res = float(np.max(np.diff(grid))) if len(grid) > 1 else 0.0
    symmetric = abs(lo + hi - 1.0) <= res + 1e-9
    if not contiguous:
        log.warning(f'revealer band [{lo:.6g}, {hi:.6g}] has gaps')
    return RevealerBand(lo, hi, contiguous, symmetric)


@dataclass(frozen=True)
class HalfPolicy:
    label: str
    value: float
    revealer_value: float
    ties: Tuple[Decision, ...]
    reachable: FrozenSet[Decision]
    # False when NeverRevealer found no tie resolution avoiding the revealer
    verified: bool = True


def classify_half_policy(problem: Problem, solution: Solution = None,
                         tol: float = BAND_TOL) -> HalfPolicy:
    '''Which of the three prior-1/2 cases holds: stop at once, consult only
    the revealer, or an optimal policy that never consults it.'''
    if abs(float(problem.prior) - 0.5) > 1e-12:
        raise PreconditionError('prior must be 1/2')
    u = problem.payoffs
    if u.u_Rr != 1 or u.u_Ll != 1:
        raise PreconditionError('payoffs must be u_Rr = u_Ll = 1')
    params = {j.id: three_signal_params(j) for j in problem.consultants}
    if any(v is None for v in params.values()):
        raise PreconditionError('consultants must be symmetric three-signal')
    revealers = [i for i, v in params.items() if v.is_revealer]
    if not revealers:
        raise PreconditionError('problem has no revealer')
    t = max(float(params[i].t) for i in revealers)
    c = float(problem.cost)
    sol = solution or solve(problem)
    v = value_at(sol, 0.5)
    rv = 1.0 - c / t
    ties = sol.ties_at(0.5)
    verified = True
    if abs(v - 0.5) < tol:
        label = NO_CONSULT
        reach = frozenset([ties[0]])
    elif abs(v - rv) < tol:
        label = ONLY_REVEALER
        reach = reachable_decisions(sol)
    else:
        label = NEVER_REVEALER
        reach = reachable_decisions(sol, avoid=frozenset(revealers))
        verified = not any(not d.is_stop and d.consultant in revealers
                           for d in reach)
        if not verified:
            log.warning('no revealer-free tie resolution found')
    log.info(f'prior 1/2: V={v:.9g}, revealer payoff {rv:.9g} -> {label}')
    return HalfPolicy(label, v, rv, ties, reach, verified)
