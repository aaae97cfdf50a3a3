# Copyright (c) 2024 consult contributors
#
# SPDX-License-Identifier: Apache-2.0

'''Domain types and Bayesian belief arithmetic for the two-state investment
problem.

A belief is the probability of state ``r``. Consultants are signal matrices
``S(s|ω)`` over an ordered signal list; signals are conditionally independent
given the state, so every update is a single application of Bayes' rule.
'''

from dataclasses import dataclass, field, replace
from fractions import Fraction
import logging
import math
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import InfiniteStep, ParameterRange, ZeroProbabilitySignal

log = logging.getLogger('consult.model')

STATE_R = 'r'
STATE_L = 'l'
STATES = (STATE_R, STATE_L)

SIGNAL_R = 'r'
SIGNAL_L = 'l'
SIGNAL_NULL = 'null'
THREE_SIGNALS = (SIGNAL_R, SIGNAL_L, SIGNAL_NULL)

# Row sums and martingale identities
PROB_TOL = 1e-12

Number = Union[float, int, Fraction]


def logit(p: float) -> float:
    if p <= 0.0:
        return -math.inf
    if p >= 1.0:
        return math.inf
    return math.log(p / (1.0 - p))


def expit(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@dataclass(frozen=True)
class Consultant:
    '''Signal matrix of one consultant.

    ``probs_r[i]`` is ``S(signals[i] | r)`` and ``probs_l[i]`` is
    ``S(signals[i] | l)``. Entries may be floats or exact ``Fraction``s.
    '''
    id: str
    signals: Tuple[str, ...]
    probs_r: Tuple[Number, ...]
    probs_l: Tuple[Number, ...]

    def __post_init__(self):
        object.__setattr__(self, 'signals', tuple(self.signals))
        object.__setattr__(self, 'probs_r', tuple(self.probs_r))
        object.__setattr__(self, 'probs_l', tuple(self.probs_l))

    @classmethod
    def from_rows(cls, id: str, signals: Sequence[str],
                  probs: Mapping[str, Sequence[Number]]) -> 'Consultant':
        return cls(id, tuple(signals), tuple(probs[STATE_R]),
                   tuple(probs[STATE_L]))

    @property
    def probs(self) -> Dict[str, Tuple[Number, ...]]:
        return {STATE_R: self.probs_r, STATE_L: self.probs_l}

    def row(self, state: str) -> Tuple[Number, ...]:
        if state == STATE_R:
            return self.probs_r
        if state == STATE_L:
            return self.probs_l
        raise KeyError(f'unknown state {state!r}')

    def index(self, s: str) -> int:
        try:
            return self.signals.index(s)
        except ValueError:
            raise KeyError(f'consultant {self.id} has no signal {s!r}') \
                from None

    def likelihood(self, s: str, state: str) -> Number:
        return self.row(state)[self.index(s)]

    def likelihoods(self, s: str) -> Tuple[float, float]:
        '''``(S(s|r), S(s|l))`` as floats.'''
        i = self.index(s)
        return float(self.probs_r[i]), float(self.probs_l[i])

    def q(self, state: str, s: str) -> float:
        '''Posterior of ``state`` after ``s`` from the uniform prior.'''
        other = STATE_L if state == STATE_R else STATE_R
        a = float(self.likelihood(s, state))
        b = float(self.likelihood(s, other))
        if a + b <= 0.0:
            raise ZeroProbabilitySignal(
                f'signal {s!r} of {self.id} has probability 0 in both states')
        return a / (a + b)

    def revealing_signals(self, state: str) -> List[str]:
        '''Signals that occur only in ``state``.'''
        other = self.row(STATE_L if state == STATE_R else STATE_R)
        own = self.row(state)
        return [s for s, a, b in zip(self.signals, own, other)
                if a > 0 and b == 0]

    def revealing_mass(self, state: str) -> float:
        '''Probability, given ``state``, of a signal revealing it.'''
        return float(sum(self.likelihood(s, state)
                         for s in self.revealing_signals(state)))

    def is_revealing(self) -> bool:
        return all(self.revealing_mass(w) > 0 for w in STATES)

    def reveals_any(self) -> bool:
        return any(self.revealing_signals(w) for w in STATES)

    def is_informative(self) -> bool:
        return any(a != b for a, b in zip(self.probs_r, self.probs_l))


def is_symmetric(j: Consultant) -> bool:
    '''True if swapping both the states and the r/l labels leaves ``j``
    unchanged.'''
    swap = {SIGNAL_R: SIGNAL_L, SIGNAL_L: SIGNAL_R}
    for s in j.signals:
        t = swap.get(s, s)
        if t not in j.signals:
            return False
        if abs(float(j.likelihood(s, STATE_R)) -
               float(j.likelihood(t, STATE_L))) > PROB_TOL:
            return False
    return True


@dataclass(frozen=True)
class Payoffs:
    '''Gains of the matching actions; mismatches pay 0.'''
    u_Rr: Number = 1.0
    u_Ll: Number = 1.0

    @property
    def max(self) -> float:
        return float(max(self.u_Rr, self.u_Ll))


@dataclass(frozen=True)
class Problem:
    prior: Number
    consultants: Tuple[Consultant, ...]
    cost: Number
    payoffs: Payoffs = field(default_factory=Payoffs)

    def __post_init__(self):
        object.__setattr__(self, 'consultants', tuple(self.consultants))

    def consultant(self, id: str) -> Consultant:
        for j in self.consultants:
            if j.id == id:
                return j
        raise KeyError(f'no consultant {id!r}')

    @property
    def ids(self) -> Tuple[str, ...]:
        return tuple(j.id for j in self.consultants)

    def with_cost(self, cost: Number) -> 'Problem':
        return replace(self, cost=cost)

    def with_prior(self, prior: Number) -> 'Problem':
        return replace(self, prior=prior)

    def with_consultants(self, consultants: Sequence[Consultant]) -> 'Problem':
        return replace(self, consultants=tuple(consultants))


@dataclass(frozen=True)
class Belief:
    '''Probability of state r, with its log-odds cached when known.'''
    p: float
    _log_odds: Optional[float] = field(default=None, compare=False,
                                       repr=False)

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ParameterRange(f'belief {self.p} outside [0, 1]')

    @classmethod
    def from_log_odds(cls, x: float) -> 'Belief':
        return cls(expit(x), x)

    @property
    def log_odds(self) -> float:
        if self._log_odds is not None:
            return self._log_odds
        return logit(self.p)

    def __float__(self) -> float:
        return float(self.p)


BeliefLike = Union[Belief, float, Fraction]


def _p(p: BeliefLike) -> float:
    return float(p.p) if isinstance(p, Belief) else float(p)


@dataclass(frozen=True)
class Decision:
    '''Stop with R or L, or consult a consultant.'''
    kind: str
    consultant: Optional[str] = None

    STOP_R = 'R'
    STOP_L = 'L'
    CONSULT = 'consult'

    @classmethod
    def consult(cls, id: str) -> 'Decision':
        return cls(cls.CONSULT, id)

    @property
    def is_stop(self) -> bool:
        return self.kind != Decision.CONSULT

    @property
    def label(self) -> str:
        if self.is_stop:
            return f'stop:{self.kind}'
        return f'consult:{self.consultant}'

    @classmethod
    def parse(cls, label: str) -> 'Decision':
        kind, _, arg = label.partition(':')
        if kind == 'stop' and arg in (cls.STOP_R, cls.STOP_L):
            return cls(arg)
        if kind == cls.CONSULT and arg:
            return cls.consult(arg)
        raise ValueError(f'invalid decision label {label!r}')

    def __str__(self):
        return self.label


STOP_R = Decision(Decision.STOP_R)
STOP_L = Decision(Decision.STOP_L)


@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    severity: str = 'error'
    consultant: Optional[str] = None

    ERROR = 'error'
    ADVISORY = 'advisory'


def _validate_consultant(j: Consultant) -> List[Violation]:
    out = []

    def v(code, msg):
        out.append(Violation(code, f'{j.id}: {msg}', consultant=j.id))

    if len(set(j.signals)) != len(j.signals):
        v('signal-duplicate', 'duplicate signal labels')
    for state in STATES:
        row = j.row(state)
        if len(row) != len(j.signals):
            v('row-length', f'row {state} has {len(row)} entries for '
              f'{len(j.signals)} signals')
            continue
        if any(not 0 <= x <= 1 for x in row):
            v('prob-range', f'row {state} has entries outside [0, 1]')
        total = sum(row)
        if abs(float(total) - 1.0) > PROB_TOL:
            v('row-sum', f'row {state} sums to {float(total):.15g}')
    return out


def validate_problem(problem: Problem) -> List[Violation]:
    '''Every invariant violation of the problem; empty when well-formed.

    ``c >= max(u)`` is reported as an advisory, not an error: the solvers
    then return the no-consultation solution.
    '''
    out = []
    if not problem.consultants:
        out.append(Violation('no-consultants', 'problem has no consultants'))
    ids = [j.id for j in problem.consultants]
    for id in sorted(set(i for i in ids if ids.count(i) > 1)):
        out.append(Violation('duplicate-id', f'consultant id {id!r} repeats',
                             consultant=id))
    for j in problem.consultants:
        out.extend(_validate_consultant(j))

    if not 0 <= problem.prior <= 1:
        out.append(Violation('prior-range',
                             f'prior {problem.prior} outside [0, 1]'))
    u = problem.payoffs
    if u.u_Rr < 0 or u.u_Ll < 0:
        out.append(Violation('payoff-negative', 'payoffs must be nonnegative'))
    elif abs(u.max - 1.0) > PROB_TOL:
        out.append(Violation('payoff-normalization',
                             f'max payoff is {u.max}, expected 1'))
    if problem.cost <= 0:
        out.append(Violation('cost-nonpositive',
                             f'cost {problem.cost} must be positive'))
    elif problem.cost >= u.max:
        out.append(Violation('cost-range',
                             f'cost {problem.cost} >= max payoff {u.max}: '
                             'consulting never pays',
                             severity=Violation.ADVISORY))
    for x in out:
        if x.severity == Violation.ADVISORY:
            log.info(f'advisory: {x.message}')
        else:
            log.debug(f'violation {x.code}: {x.message}')
    return out


def signal_prob(p: BeliefLike, j: Consultant, s: str) -> float:
    '''P_j(p, s): probability of signal ``s`` at belief ``p``.'''
    p = _p(p)
    lr, ll = j.likelihoods(s)
    return p * lr + (1.0 - p) * ll


def posterior(p: BeliefLike, j: Consultant, s: str) -> Belief:
    '''Bayes update of ``p`` on signal ``s`` from ``j``.

    Revealing signals give exactly 0 or 1; uninformative ones leave the
    belief bit-identical.
    '''
    p = _p(p)
    lr, ll = j.likelihoods(s)
    a = p * lr
    b = (1.0 - p) * ll
    if a + b <= 0.0:
        raise ZeroProbabilitySignal(
            f'signal {s!r} of {j.id} cannot occur at belief {p}')
    if b == 0.0:
        return Belief(1.0)
    if a == 0.0:
        return Belief(0.0)
    if lr == ll:
        return Belief(p)
    return Belief(a / (a + b))


def posterior_after_repeats(p: BeliefLike, j: Consultant, s: str,
                            n: int) -> Belief:
    '''Belief after receiving ``s`` from ``j`` for ``n`` consecutive
    stages.'''
    if n < 0:
        raise ParameterRange(f'repeat count {n} is negative')
    p = _p(p)
    if n == 0:
        return Belief(p)
    # The first step carries every feasibility check
    first = posterior(p, j, s).p
    if first in (0.0, 1.0) or n == 1:
        return Belief(first)
    lr, ll = j.likelihoods(s)
    if lr == ll:
        return Belief(p)
    ratio = (1.0 - p) / p * (ll / lr) ** n
    return Belief(1.0 / (1.0 + ratio))


def log_odds_update(p: BeliefLike, j: Consultant, s: str) -> Belief:
    '''Additive update of the log-odds by ``ln(S(s|r) / S(s|l))``.'''
    lr, ll = j.likelihoods(s)
    if lr == 0.0 or ll == 0.0:
        raise InfiniteStep(f'signal {s!r} of {j.id} is revealing; use '
                           'posterior()')
    if isinstance(p, Belief):
        x = p.log_odds
    else:
        x = logit(float(p))
    if math.isinf(x):
        raise InfiniteStep(f'belief {_p(p)} has infinite log-odds')
    return Belief.from_log_odds(x + math.log(lr / ll))


def stopping_value(p: BeliefLike, payoffs: Payoffs) -> float:
    '''Value of stopping at once with the better action.'''
    p = _p(p)
    return max(p * float(payoffs.u_Rr), (1.0 - p) * float(payoffs.u_Ll))


def posterior_many(p: np.ndarray, lr: float, ll: float) -> np.ndarray:
    '''Vectorised ``posterior`` for one signal; infeasible entries get
    ``p``.'''
    a = p * lr
    b = (1.0 - p) * ll
    total = a + b
    with np.errstate(invalid='ignore', divide='ignore'):
        post = np.where(total > 0, a / np.where(total > 0, total, 1.0), p)
    if lr == ll:
        return p.copy()
    post = np.where((b == 0) & (a > 0), 1.0, post)
    post = np.where((a == 0) & (b > 0), 0.0, post)
    return post
