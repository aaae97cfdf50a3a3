# Copyright (c) 2024 consult contributors
#
# SPDX-License-Identifier: Apache-2.0

import dataclasses
from fractions import Fraction
import math
from typing import Any, Union


def f(d: Any = dataclasses.MISSING, c: str = None):
    '''Dataclass field with a default and a ``doc`` string in its
    metadata.'''
    m = dict()
    if d is not dataclasses.MISSING:
        m['default'] = d
    if c:
        m['metadata'] = {'doc': c}
    return dataclasses.field(**m)


def doc(cls, name: str) -> str:
    '''The ``doc`` metadata of field ``name`` of dataclass ``cls``.'''
    for fld in dataclasses.fields(cls):
        if fld.name == name:
            return fld.metadata.get('doc', '')
    raise KeyError(name)


def fmt(v: Union[float, Fraction]) -> str:
    '''Render a value with 12 significant digits.'''
    return f'{float(v):.12g}'


def cost_cap(c: float, scale: float) -> int:
    '''``ceil(scale / c)``, the iteration and step caps that grow with
    1/c.'''
    return max(1, int(math.ceil(scale / float(c))))
