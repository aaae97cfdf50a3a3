# Copyright (c) 2024 consult contributors
#
# SPDX-License-Identifier: Apache-2.0

'''Exceptions raised by the consult package.'''

from typing import Optional


class ConsultError(Exception):
    '''Base class for all consult errors.'''


class ZeroProbabilitySignal(ConsultError, ValueError):
    '''The signal cannot occur at the given belief.'''


class InfiniteStep(ConsultError, ValueError):
    '''A revealing signal has an infinite log-likelihood ratio.'''


class SpecMismatch(ConsultError, ValueError):
    '''A lattice spec does not cover every consultant signal.'''


class LatticeTooLarge(ConsultError):
    '''The consult band holds more lattice points than allowed.'''


class SizeGuardError(ConsultError, ValueError):
    '''The brute-force oracle was asked for an intractable tree.'''


class NotRevealing(ConsultError, ValueError):
    '''The consultant lacks a revealing signal for some state.'''


class RevealingInNonRevealers(ConsultError, ValueError):
    '''A consultant passed as non-revealing reveals a state.'''


class ParameterRange(ConsultError, ValueError):
    '''A parameter lies outside its admissible range.'''


class PreconditionError(ConsultError, ValueError):
    '''An operation was called outside its preconditions.'''


class UnmappedBelief(ConsultError, LookupError):
    '''A policy has no decision for the belief reached.'''


class SchemaError(ConsultError, ValueError):
    '''A problem document does not follow the schema.'''

    def __init__(self, msg: str, field: Optional[str] = None,
                 line: Optional[int] = None):
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f'line {line}')
        if field:
            where.append(f'field {field}')
        if where:
            msg = f'{", ".join(where)}: {msg}'
        super().__init__(msg)


class InvalidProblem(ConsultError, ValueError):
    '''A parsed problem fails validation; ``violations`` lists why.'''

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__('; '.join(v.message for v in self.violations))
