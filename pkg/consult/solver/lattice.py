# Copyright (c) 2024 consult contributors
#
# SPDX-License-Identifier: Apache-2.0

'''Exact dynamic programming for consultants with a rational ratio.

When every finite log-likelihood ratio is an integer multiple of a common
quantum ``Q``, the beliefs reachable from the prior are
``expit(logit(p0) + k*Q)`` for integer ``k``. Only finitely many of them lie
in the band where consulting can pay, so the Bellman equation is solved exactly
on a finite state set.
'''

from dataclasses import dataclass, field
from fractions import Fraction
import logging
import math
from typing import Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..errors import LatticeTooLarge, ParameterRange, SpecMismatch
from ..model import (Consultant, Number, Problem, STATE_L, STATE_R, expit,
                     logit)
from ..util import cost_cap, f
from .base import (SOLVER_LATTICE, Solution, SolveMeta, Solver, decide,
                   value_at)

log = logging.getLogger('consult.lattice')

MAX_DENOMINATOR = 10 ** 6
# Residual allowed between a log-likelihood ratio and k*Q, in units of Q
RATIO_TOL = 1e-9


@dataclass(frozen=True)
class LatticeConfig:
    tol: float = f(1e-13, 'Sup-norm change below which iteration stops')
    max_iters: Optional[int] = f(None, 'Iteration cap, ceil(40/c) if unset')
    max_points: int = f(10 ** 6, 'Largest number of consult-band points')
    tie_tol: float = f(1e-9, 'Branches this close to the best one tie')

    def __post_init__(self):
        if not self.tol > 0:
            raise ParameterRange(f'tol {self.tol} must be positive')
        if self.max_iters is not None and self.max_iters < 1:
            raise ParameterRange(f'max_iters {self.max_iters} < 1')

    def iters_for(self, cost: float) -> int:
        if self.max_iters is not None:
            return self.max_iters
        return cost_cap(cost, 40)


@dataclass(frozen=True)
class LatticeSpec:
    '''Common log-odds quantum and the integer step of every signal.

    ``offsets[(j, s)]`` is the step of a signal with both likelihoods
    positive (0 when uninformative or impossible); ``reveals[(j, s)]`` is the
    state pinned by a revealing signal.
    '''
    Q: float
    offsets: Mapping[Tuple[str, str], int] = field(default_factory=dict)
    reveals: Mapping[Tuple[str, str], str] = field(default_factory=dict)
    exact: bool = False

    def covers(self, consultants: Sequence[Consultant]) -> List[str]:
        '''Ids of consultants with a signal missing from the spec.'''
        return [j.id for j in consultants
                if any((j.id, s) not in self.offsets and
                       (j.id, s) not in self.reveals for s in j.signals)]


def _convergents(x: Fraction) -> Iterator[Fraction]:
    p0, q0, p1, q1 = 0, 1, 1, 0
    n, d = x.numerator, x.denominator
    while d:
        a = n // d
        p0, q0, p1, q1 = p1, q1, a * p1 + p0, a * q1 + q0
        yield Fraction(p1, q1)
        n, d = d, n - a * d


def commensurate(x: float, max_denominator: int = MAX_DENOMINATOR,
                 tol: float = RATIO_TOL) -> Optional[Fraction]:
    '''Smallest-denominator convergent ``p/q`` of ``x`` with
    ``|x*q - p| <= tol``, or None if none has ``q <= max_denominator``.

    The residual is measured in units of ``1/q``, so float noise on a true
    rational passes while a long continued fraction does not.
    '''
    if max_denominator < 1:
        raise ParameterRange('max_denominator must be at least 1')
    exact = Fraction(x)
    for conv in _convergents(exact):
        if conv.denominator > max_denominator:
            return None
        if abs(exact * conv.denominator - conv.numerator) <= tol:
            return conv
    return None


def _lcm(a: int, b: int) -> int:
    return a * b // math.gcd(a, b)


def _gcd_all(xs: Sequence[int]) -> int:
    g = 0
    for x in xs:
        g = math.gcd(g, x)
    return g


def _float_quantum(llrs: Sequence[float], max_denominator: int,
                   tol: float) -> Optional[Tuple[float, List[int]]]:
    x0 = min(llrs, key=abs)
    fracs = []
    for x in llrs:
        r = commensurate(x / x0, max_denominator, tol)
        if r is None:
            return None
        fracs.append(r)
    d = 1
    for r in fracs:
        d = _lcm(d, r.denominator)
    ns = [int(r * d) for r in fracs]
    g = _gcd_all(ns)
    Q = abs(x0) * g / d
    sign = 1 if x0 > 0 else -1
    ks = [sign * n // g for n in ns]
    for x, k in zip(llrs, ks):
        if abs(x - k * Q) > tol * Q:
            return None
    return Q, ks


def _as_fraction(x: Number) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    return Fraction(repr(x))


def _height(r: Fraction) -> int:
    return max(abs(r.numerator), r.denominator)


def _log(r: Fraction) -> float:
    if abs(r - 1) < Fraction(1, 2):
        return math.log1p(float(r - 1))
    return math.log(r.numerator) - math.log(r.denominator)


def _common_base(x: Fraction, y: Fraction) -> Optional[Fraction]:
    '''Largest ``b > 1`` with ``x`` and ``y`` both integer powers of ``b``,
    or None. ``x, y > 1``.

    Euclid's algorithm on the logarithms. Every remainder of a
    commensurate pair is a power of the answer no taller than the inputs,
    so a taller remainder proves there is no common base.
    '''
    bound = max(_height(x), _height(y))
    while True:
        if x < y:
            x, y = y, x
        m = max(1, int(_log(x) / _log(y)))
        if (m - 1) * math.log(_height(y)) > math.log(bound):
            return None
        r = x / y ** m
        while r < 1:
            r *= y
        while r >= y:
            r /= y
        if r == 1:
            return y
        if _height(r) > bound:
            return None
        x, y = y, r


def _exact_quantum(ratios: Sequence[Fraction]
                   ) -> Optional[Tuple[float, List[int]]]:
    '''Quantum of exact likelihood ratios: all must be integer powers of one
    rational base.'''
    ups = [r if r > 1 else 1 / r for r in ratios]
    base = ups[0]
    for r in ups[1:]:
        base = _common_base(base, r)
        if base is None:
            return None
    lq = _log(base)
    ks = []
    for r, up in zip(ratios, ups):
        k = round(_log(up) / lq)
        if base ** k != up:
            return None
        ks.append(k if r > 1 else -k)
    return lq, ks


def detect_rational_ratio(consultants: Sequence[Consultant],
                          max_denominator: int = MAX_DENOMINATOR,
                          tol: float = RATIO_TOL,
                          exact: Optional[bool] = None
                          ) -> Optional[LatticeSpec]:
    '''LatticeSpec of a consultant set with a rational ratio, else None.

    With ``exact`` (the default when every likelihood is a Fraction or int)
    the ratios are compared as exact rationals; otherwise the float
    log-likelihood ratios go through continued fractions.
    '''
    if max_denominator < 1:
        raise ParameterRange('max_denominator must be at least 1')
    if exact is None:
        exact = all(isinstance(x, (Fraction, int))
                    for j in consultants for x in j.probs_r + j.probs_l)
    offsets = {}
    reveals = {}
    keys = []
    ratios = []
    for j in consultants:
        for s, a, b in zip(j.signals, j.probs_r, j.probs_l):
            key = (j.id, s)
            if a == 0 and b == 0:
                offsets[key] = 0
            elif b == 0:
                reveals[key] = STATE_R
            elif a == 0:
                reveals[key] = STATE_L
            elif a == b:
                offsets[key] = 0
            else:
                keys.append(key)
                ratios.append(_as_fraction(a) / _as_fraction(b) if exact
                              else math.log(float(a) / float(b)))
    if not keys:
        # Nothing moves the log-odds by a finite amount; any Q works
        return LatticeSpec(1.0, offsets, reveals, exact)
    if exact:
        found = _exact_quantum(ratios)
    else:
        found = _float_quantum(ratios, max_denominator, tol)
    if found is None:
        log.debug(f'no rational ratio among {len(keys)} signals')
        return None
    Q, ks = found
    offsets.update(zip(keys, ks))
    log.debug(f'rational ratio: Q={Q:.12g}, offsets {dict(zip(keys, ks))}')
    return LatticeSpec(Q, offsets, reveals, exact)


@dataclass(frozen=True, eq=False)
class Lattice:
    '''Consult-band points ``k_min..k_max`` around the prior.

    Point ``k`` has log-odds ``base + k*Q``; points outside the band are
    absorbing with their stopping value, and revealed beliefs 0 and 1 are
    absorbing with ``u_Ll`` and ``u_Rr``. An empty band has
    ``k_min > k_max``.
    '''
    problem: Problem
    spec: LatticeSpec
    base: float
    k_min: int
    k_max: int
    band: Tuple[float, float]

    @property
    def size(self) -> int:
        return max(0, self.k_max - self.k_min + 1)

    @property
    def indices(self) -> np.ndarray:
        return np.arange(self.k_min, self.k_max + 1)

    def belief(self, k: int) -> float:
        if k == 0:
            return float(self.problem.prior)
        return expit(self.base + k * self.spec.Q)

    def beliefs_of(self, ks: np.ndarray) -> np.ndarray:
        x = self.base + ks * self.spec.Q
        out = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                       np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
        return np.where(ks == 0, float(self.problem.prior), out)

    @property
    def beliefs(self) -> np.ndarray:
        return self.beliefs_of(self.indices)

    def contains(self, k: int) -> bool:
        return self.k_min <= k <= self.k_max


def _band(problem: Problem) -> Tuple[float, float]:
    '''Beliefs where one consultation can still pay for itself.

    Below ``c/u_Rr`` even perfect information gains at most ``c`` over
    stopping with L; above ``1 - c/u_Ll`` symmetrically for R.
    '''
    u = problem.payoffs
    c = float(problem.cost)
    lo = c / float(u.u_Rr) if u.u_Rr > 0 else math.inf
    hi = 1.0 - c / float(u.u_Ll) if u.u_Ll > 0 else -math.inf
    return lo, hi


def build_lattice(problem: Problem, spec: LatticeSpec,
                  max_points: int = 10 ** 6) -> Lattice:
    missing = spec.covers(problem.consultants)
    if missing:
        raise SpecMismatch(f'lattice spec lacks signals of {missing}')
    p0 = float(problem.prior)
    lo, hi = _band(problem)
    base = logit(p0)
    empty = Lattice(problem, spec, base, 1, 0, (lo, hi))
    if not (0.0 < lo <= hi < 1.0) or not lo <= p0 <= hi:
        log.debug(f'prior {p0} outside consult band [{lo:.6g}, {hi:.6g}]')
        return empty
    Q = spec.Q
    k_min = int(math.ceil((logit(lo) - base) / Q))
    k_max = int(math.floor((logit(hi) - base) / Q))
    lat = Lattice(problem, spec, base, k_min, k_max, (lo, hi))
    # Rounding at the band edges
    while k_min < 0 and lat.belief(k_min) < lo:
        k_min += 1
    while lat.belief(k_min - 1) >= lo:
        k_min -= 1
    while k_max > 0 and lat.belief(k_max) > hi:
        k_max -= 1
    while lat.belief(k_max + 1) <= hi:
        k_max += 1
    if k_max - k_min + 1 > max_points:
        raise LatticeTooLarge(f'{k_max - k_min + 1} band points exceed '
                              f'{max_points}')
    log.debug(f'lattice: k in [{k_min}, {k_max}], Q={Q:.6g}')
    return Lattice(problem, spec, base, k_min, k_max, (lo, hi))


class _Transitions:
    '''Per consultant: probability, target slot (-1 if absorbing) and
    absorbing value of every moving signal, plus the self-loop mass.'''

    def __init__(self, lattice: Lattice):
        problem = lattice.problem
        u = problem.payoffs
        ks = lattice.indices
        p = lattice.beliefs
        self.terms = []
        self.stay = []
        for j in problem.consultants:
            terms = []
            stay = np.zeros(len(ks))
            for s in j.signals:
                lr, ll = j.likelihoods(s)
                prob = p * lr + (1.0 - p) * ll
                key = (j.id, s)
                if key in lattice.spec.reveals:
                    won = (float(u.u_Rr) if lattice.spec.reveals[key] ==
                           STATE_R else float(u.u_Ll))
                    terms.append((prob, np.full(len(ks), -1),
                                  np.full(len(ks), won)))
                    continue
                m = lattice.spec.offsets[key]
                if m == 0:
                    stay += prob
                    continue
                tk = ks + m
                inside = (tk >= lattice.k_min) & (tk <= lattice.k_max)
                tp = lattice.beliefs_of(tk)
                outside = np.maximum(tp * float(u.u_Rr),
                                     (1.0 - tp) * float(u.u_Ll))
                terms.append((prob, np.where(inside, tk - lattice.k_min, -1),
                              outside))
            self.terms.append(terms)
            self.stay.append(stay)

    def moving(self, k: int, values: np.ndarray) -> np.ndarray:
        acc = np.zeros(len(values))
        for prob, slot, outside in self.terms[k]:
            acc += prob * np.where(slot >= 0, values[np.maximum(slot, 0)],
                                   outside)
        return acc

    def consult_values(self, values: np.ndarray, cost: float,
                       fold: bool = True) -> np.ndarray:
        out = np.empty((len(self.terms), len(values)))
        for k, stay in enumerate(self.stay):
            mov = self.moving(k, values)
            raw = mov + stay * values - cost
            if fold:
                with np.errstate(divide='ignore', invalid='ignore'):
                    out[k] = np.where(stay < 1.0, (mov - cost) /
                                      np.where(stay < 1.0, 1.0 - stay, 1.0),
                                      raw)
            else:
                out[k] = raw
        return out


def solve_lattice(problem: Problem, lattice: Lattice,
                  cfg: LatticeConfig = None) -> Solution:
    '''Solve the Bellman equation on the lattice by value iteration from
    the stopping values.

    The returned grid holds the revealed beliefs 0 and 1, the band points,
    and the prior when it lies outside the band; only band points can
    consult.
    '''
    cfg = cfg or LatticeConfig()
    u = problem.payoffs
    c = float(problem.cost)
    p = lattice.beliefs
    stop = np.vstack([p * float(u.u_Rr), (1.0 - p) * float(u.u_Ll)])
    values = stop.max(axis=0)
    it, delta = 0, 0.0
    trans = None
    if lattice.size and problem.consultants:
        trans = _Transitions(lattice)
        for it in range(1, cfg.iters_for(c) + 1):
            new = np.maximum(stop.max(axis=0),
                             trans.consult_values(values, c).max(axis=0))
            delta = float(np.max(np.abs(new - values)))
            values = new
            if delta < cfg.tol:
                break
    converged = delta < cfg.tol
    if converged:
        log.debug(f'lattice solve: {lattice.size} points, {it} sweeps, '
                  f'final change {delta:.3e}')
    else:
        log.warning(f'lattice solve did not converge: {it} sweeps, final '
                    f'change {delta:.3e} >= tol {cfg.tol:g}')

    nj = len(problem.consultants)
    if trans is not None:
        consult = trans.consult_values(values, c, fold=False)
    else:
        consult = np.full((nj, lattice.size), -np.inf)
    # Absorbing points: revealed beliefs and a prior outside the band
    extra = [0.0, 1.0]
    p0 = float(problem.prior)
    if not lattice.size and p0 not in extra:
        extra.append(p0)
    ep = np.array(extra)
    grid = np.concatenate([p, ep])
    estop = np.vstack([ep * float(u.u_Rr), (1.0 - ep) * float(u.u_Ll)])
    branches = np.hstack([np.vstack([stop, consult]),
                          np.vstack([estop, np.full((nj, len(ep)),
                                                    -np.inf)])])
    allvals = np.concatenate([values, estop.max(axis=0)])
    order = np.argsort(grid, kind='stable')
    grid, allvals, branches = grid[order], allvals[order], branches[:, order]
    policy, ties = decide(problem, branches, cfg.tie_tol)
    return Solution(problem, grid, allvals, policy, ties, branches,
                    SolveMeta(SOLVER_LATTICE, it, delta, converged),
                    lattice.band)


def lattice_value(problem: Problem, spec: LatticeSpec,
                  cfg: LatticeConfig = None) -> float:
    '''Exact value at the problem's prior.'''
    cfg = cfg or LatticeConfig()
    lat = build_lattice(problem, spec, cfg.max_points)
    return value_at(solve_lattice(problem, lat, cfg), problem.prior)


@dataclass(frozen=True)
class Segment:
    start: float
    end: float
    slope: float
    intercept: float
    residual: float
    samples: int

    def __call__(self, p: float) -> float:
        return self.slope * p + self.intercept


@dataclass(frozen=True, eq=False)
class Piecewise:
    priors: np.ndarray
    values: np.ndarray
    segments: Tuple[Segment, ...]
    breakpoints: Tuple[float, ...]


def _fits(x: np.ndarray, y: np.ndarray, tol: float) -> bool:
    slope = (y[-1] - y[0]) / (x[-1] - x[0])
    return bool(np.max(np.abs(y[0] + slope * (x - x[0]) - y)) < tol)


def _segment(x: np.ndarray, y: np.ndarray, xl: Optional[float] = None,
             yl: Optional[float] = None) -> Segment:
    if len(x) >= 2:
        slope, intercept = np.polyfit(x, y, 1)
    elif xl is not None:
        # Single sample: chord to the previous sample
        slope = (y[0] - yl) / (x[0] - xl)
        intercept = y[0] - slope * x[0]
    else:
        slope, intercept = 0.0, float(y[0])
    res = float(np.max(np.abs(slope * x + intercept - y)))
    return Segment(float(x[0]), float(x[-1]), float(slope), float(intercept),
                   res, len(x))


def piecewise_extract(problem: Problem, spec: LatticeSpec,
                      priors: Sequence[float] = None,
                      merge_tol: float = 1e-8,
                      cfg: LatticeConfig = None) -> Piecewise:
    '''Exact values over a sweep of priors, merged into maximal affine
    segments.

    ``problem`` supplies everything but the prior. The sweep defaults to
    2001 priors on [0.001, 0.999].
    '''
    if priors is None:
        priors = np.linspace(0.001, 0.999, 2001)
    x = np.asarray(priors, dtype=float)
    y = np.array([lattice_value(problem.with_prior(float(p)), spec, cfg)
                  for p in x])
    segs = []
    i, n = 0, len(x)
    while i < n:
        j = i + 1
        while j + 1 < n and _fits(x[i:j + 2], y[i:j + 2], merge_tol):
            j += 1
        j = min(j, n - 1)
        if j == i:
            segs.append(_segment(x[i:i + 1], y[i:i + 1],
                                 x[i - 1] if i else None,
                                 y[i - 1] if i else None))
        else:
            segs.append(_segment(x[i:j + 1], y[i:j + 1]))
        i = j + 1
    breaks = []
    for a, b in zip(segs, segs[1:]):
        xb = (a.end + b.start) / 2
        if a.slope != b.slope:
            cross = (b.intercept - a.intercept) / (a.slope - b.slope)
            if a.start <= cross <= b.end:
                xb = cross
        breaks.append(float(xb))
    log.debug(f'piecewise: {len(segs)} segments over {n} priors')
    return Piecewise(x, y, tuple(segs), tuple(breaks))


class LatticeSolver(Solver):

    def __init__(self, cfg: LatticeConfig = None, spec: LatticeSpec = None):
        super().__init__(SOLVER_LATTICE)
        self.cfg = cfg or LatticeConfig()
        self.spec = spec

    def solve(self, problem: Problem) -> Solution:
        spec = self.spec or detect_rational_ratio(problem.consultants)
        if spec is None:
            raise SpecMismatch('consultants have no rational ratio')
        lat = build_lattice(problem, spec, self.cfg.max_points)
        return solve_lattice(problem, lat, self.cfg)
