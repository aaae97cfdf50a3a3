# Copyright (c) 2024 consult contributors
#
# SPDX-License-Identifier: Apache-2.0

'''JSON problem documents.

A document looks like::

    {
      "prior": 0.5,
      "cost": 0.01,
      "payoffs": {"R_r": 1, "L_l": 1},
      "signals": ["r", "l", "null"],
      "consultants": [
        {"id": "c1", "probs": {"r": [0.8, 0.2, 0], "l": [0.2, 0.8, 0]}}
      ],
      "exact": false,
      "solver": {"grid_size": 4001, "tol": 1e-10, "max_iters": 5000}
    }

``payoffs``, ``exact`` and ``solver`` are optional. With ``"exact": true``
probabilities may be written as strings such as ``"16/17"`` and every
number is kept as a ``Fraction``.
'''

from dataclasses import dataclass, fields
from fractions import Fraction
import json
import logging
from typing import Any, Dict, Optional, Sequence, Tuple, Union

from .errors import InvalidProblem, SchemaError
from .model import (Consultant, Number, Payoffs, Problem, STATE_L, STATE_R,
                    Violation, validate_problem)
from .solver import GridConfig

log = logging.getLogger('consult.document')

TOP_KEYS = ('prior', 'cost', 'payoffs', 'signals', 'consultants', 'exact',
            'solver')
REQUIRED = ('prior', 'cost', 'signals', 'consultants')
PAYOFF_KEYS = {'R_r': 'u_Rr', 'L_l': 'u_Ll'}


@dataclass(frozen=True)
class SolverSection:
    grid_size: Optional[int] = None
    tol: Optional[float] = None
    max_iters: Optional[int] = None

    def grid_config(self, **overrides) -> GridConfig:
        '''GridConfig from this section; non-None ``overrides`` win.'''
        kw = {f.name: getattr(self, f.name) for f in fields(self)}
        kw.update((k, v) for k, v in overrides.items() if v is not None)
        return GridConfig(**{k: v for k, v in kw.items() if v is not None})


@dataclass(frozen=True)
class ProblemDocument:
    prior: Number
    cost: Number
    signals: Tuple[str, ...]
    consultants: Tuple[Consultant, ...]
    payoffs: Optional[Payoffs] = None
    exact: bool = False
    solver: Optional[SolverSection] = None

    def to_problem(self) -> Problem:
        return Problem(self.prior, self.consultants, self.cost,
                       self.payoffs or Payoffs())

    @classmethod
    def from_problem(cls, problem: Problem,
                     solver: Optional[SolverSection] = None
                     ) -> 'ProblemDocument':
        '''Document of ``problem``; exact when any number is a Fraction.'''
        if not problem.consultants:
            raise SchemaError('problem has no consultants', 'consultants')
        signals = problem.consultants[0].signals
        for j in problem.consultants:
            if j.signals != signals:
                raise SchemaError(f'consultant {j.id} has signals '
                                  f'{list(j.signals)}, expected '
                                  f'{list(signals)}', 'signals')
        u = problem.payoffs
        values = [problem.prior, problem.cost, u.u_Rr, u.u_Ll]
        for j in problem.consultants:
            values.extend(j.probs_r + j.probs_l)
        exact = any(isinstance(x, Fraction) for x in values)
        return cls(problem.prior, problem.cost, signals,
                   problem.consultants, u, exact, solver)

    def to_dict(self) -> Dict[str, Any]:
        out = {'prior': _dump_number(self.prior, self.exact),
               'cost': _dump_number(self.cost, self.exact)}
        if self.payoffs is not None:
            out['payoffs'] = {k: _dump_number(getattr(self.payoffs, a),
                                              self.exact)
                              for k, a in PAYOFF_KEYS.items()}
        out['signals'] = list(self.signals)
        out['consultants'] = [
            {'id': j.id,
             'probs': {STATE_R: [_dump_number(x, self.exact)
                                 for x in j.probs_r],
                       STATE_L: [_dump_number(x, self.exact)
                                 for x in j.probs_l]}}
            for j in self.consultants]
        if self.exact:
            out['exact'] = True
        if self.solver is not None:
            out['solver'] = {f.name: getattr(self.solver, f.name)
                             for f in fields(self.solver)
                             if getattr(self.solver, f.name) is not None}
        return out


def _dump_number(x: Number, exact: bool = False) -> Union[int, float, str]:
    if exact and isinstance(x, float):
        # The binary value itself, so the reload is bit-identical
        x = Fraction(x)
    if isinstance(x, Fraction):
        if x.denominator == 1:
            return x.numerator
        return f'{x.numerator}/{x.denominator}'
    return x


class _Reader:
    '''Schema checks with line numbers looked up in the source text.'''

    def __init__(self, text: Optional[str]):
        self.text = text

    def line(self, *needles: str) -> Optional[int]:
        '''Line of the last of ``needles`` found one after the other.'''
        if self.text is None:
            return None
        pos = 0
        for n in needles:
            i = self.text.find(n, pos)
            if i < 0:
                break
            pos = i
        return self.text.count('\n', 0, pos) + 1

    def fail(self, msg: str, field: str, *needles: str):
        raise SchemaError(msg, field, self.line(*needles))

    def keys(self, d: Any, allowed: Sequence[str], field: str,
             *needles: str):
        if not isinstance(d, dict):
            self.fail('expected an object', field, *needles)
        for k in d:
            if k not in allowed:
                self.fail(f'unknown field {k!r}',
                          f'{field}.{k}' if field else k, *needles, f'"{k}"')

    def number(self, x: Any, exact: bool, field: str,
               *needles: str) -> Number:
        if isinstance(x, bool):
            self.fail('expected a number', field, *needles)
        if isinstance(x, int):
            return Fraction(x) if exact else x
        if isinstance(x, float):
            return Fraction(repr(x)) if exact else x
        if isinstance(x, str):
            if not exact:
                self.fail(f'rational {x!r} needs "exact": true', field,
                          *needles)
            try:
                return Fraction(x)
            except (ValueError, ZeroDivisionError):
                self.fail(f'invalid rational {x!r}', field, *needles)
        self.fail('expected a number', field, *needles)


def document_from_dict(d: Any, text: Optional[str] = None
                       ) -> ProblemDocument:
    r = _Reader(text)
    r.keys(d, TOP_KEYS, '')
    for k in REQUIRED:
        if k not in d:
            r.fail('missing required field', k)
    exact = d.get('exact', False)
    if not isinstance(exact, bool):
        r.fail('expected true or false', 'exact', '"exact"')

    prior = r.number(d['prior'], exact, 'prior', '"prior"')
    cost = r.number(d['cost'], exact, 'cost', '"cost"')
    if cost < 0:
        r.fail(f'cost {cost} is negative', 'cost', '"cost"')

    payoffs = None
    if 'payoffs' in d:
        r.keys(d['payoffs'], tuple(PAYOFF_KEYS), 'payoffs', '"payoffs"')
        kw = {}
        for k, a in PAYOFF_KEYS.items():
            if k in d['payoffs']:
                kw[a] = r.number(d['payoffs'][k], exact, f'payoffs.{k}',
                                 '"payoffs"', f'"{k}"')
        payoffs = Payoffs(**kw)

    signals = d['signals']
    if not isinstance(signals, list) or not signals or \
            not all(isinstance(s, str) for s in signals):
        r.fail('expected a non-empty list of strings', 'signals',
               '"signals"')
    signals = tuple(signals)

    if not isinstance(d['consultants'], list):
        r.fail('expected a list', 'consultants', '"consultants"')
    consultants = []
    for i, c in enumerate(d['consultants']):
        where = f'consultants[{i}]'
        r.keys(c, ('id', 'probs'), where, '"consultants"')
        if not isinstance(c.get('id'), str):
            r.fail('expected a string id', f'{where}.id', '"consultants"')
        id = c['id']
        anchor = ('"consultants"', f'"{id}"')
        if 'probs' not in c:
            r.fail(f'consultant {id}: missing probs', f'{where}.probs',
                   *anchor)
        r.keys(c['probs'], (STATE_R, STATE_L), f'{where}.probs', *anchor,
               '"probs"')
        rows = {}
        for state in (STATE_R, STATE_L):
            field = f'{where}.probs.{state}'
            at = anchor + ('"probs"', f'"{state}"')
            row = c['probs'].get(state)
            if not isinstance(row, list):
                r.fail(f'consultant {id}: missing row {state}', field, *at)
            if len(row) != len(signals):
                r.fail(f'consultant {id}: row {state} has {len(row)} '
                       f'entries for {len(signals)} signals', field, *at)
            rows[state] = [r.number(x, exact, field, *at) for x in row]
        consultants.append(Consultant.from_rows(id, signals, rows))

    solver = None
    if 'solver' in d:
        s = d['solver']
        r.keys(s, ('grid_size', 'tol', 'max_iters'), 'solver', '"solver"')
        for k in ('grid_size', 'max_iters'):
            if k in s and (isinstance(s[k], bool) or
                           not isinstance(s[k], int)):
                r.fail('expected an integer', f'solver.{k}', '"solver"',
                       f'"{k}"')
        if 'tol' in s and (isinstance(s['tol'], bool) or
                           not isinstance(s['tol'], (int, float))):
            r.fail('expected a number', 'solver.tol', '"solver"', '"tol"')
        solver = SolverSection(**s)

    return ProblemDocument(prior, cost, signals, tuple(consultants),
                           payoffs, exact, solver)


def loads_document(text: str) -> ProblemDocument:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaError(e.msg, line=e.lineno) from None
    return document_from_dict(d, text)


def load_document(path: str) -> ProblemDocument:
    with open(path, encoding='utf-8') as fp:
        text = fp.read()
    log.debug(f'loaded {path}')
    return loads_document(text)


def dump_document(doc: ProblemDocument, path: str = None) -> str:
    text = json.dumps(doc.to_dict(), indent=2) + '\n'
    if path is not None:
        with open(path, 'w', encoding='utf-8') as fp:
            fp.write(text)
    return text


def check_problem(problem: Problem) -> Problem:
    '''``problem`` itself, or InvalidProblem listing its errors.'''
    errors = [v for v in validate_problem(problem)
              if v.severity == Violation.ERROR]
    if errors:
        raise InvalidProblem(errors)
    return problem


def parse_problem(path: str) -> Tuple[Problem, ProblemDocument]:
    '''Load, schema-check and validate a problem document.'''
    doc = load_document(path)
    return check_problem(doc.to_problem()), doc
