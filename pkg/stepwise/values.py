# Copyright (c) 2022-present, Varun J., All rights reserved.
#
# Redistribution and use in source and binary forms, with or without
# modification, are permitted provided that the following conditions are met:
#
# 1. Redistributions of source code must retain the above copyright notice, this
#    list of conditions and the following disclaimer.
#
# 2. Redistributions in binary form must reproduce the above copyright notice,
#    this list of conditions and the following disclaimer in the documentation
#    and/or other materials provided with the distribution.
#
# 3. Neither the name of the copyright holder nor the names of its contributors
#    may be used to endorse or promote products derived from this software
#    without specific prior written permission.
#
# THIS SOFTWARE IS PROVIDED BY THE COPYRIGHT HOLDERS AND CONTRIBUTORS "AS IS" AND
# ANY EXPRESS OR IMPLIED WARRANTIES, INCLUDING, BUT NOT LIMITED TO, THE IMPLIED
# WARRANTIES OF MERCHANTABILITY AND FITNESS FOR A PARTICULAR PURPOSE ARE
# DISCLAIMED. IN NO EVENT SHALL THE COPYRIGHT HOLDER OR CONTRIBUTORS BE LIABLE
# FOR ANY DIRECT, INDIRECT, INCIDENTAL, SPECIAL, EXEMPLARY, OR CONSEQUENTIAL
# DAMAGES (INCLUDING, BUT NOT LIMITED TO, PROCUREMENT OF SUBSTITUTE GOODS OR
# SERVICES; LOSS OF USE, DATA, OR PROFITS; OR BUSINESS INTERRUPTION) HOWEVER
# CAUSED AND ON ANY THEORY OF LIABILITY, WHETHER IN CONTRACT, STRICT LIABILITY,
# OR TORT (INCLUDING NEGLIGENCE OR OTHERWISE) ARISING IN ANY WAY OUT OF THE USE
# OF THIS SOFTWARE, EVEN IF ADVISED OF THE POSSIBILITY OF SUCH DAMAGE.

from __future__ import annotations

import decimal
import json
import math
import operator
from collections.abc import Callable, Iterable, Iterator, Mapping, MutableSet
from typing import Any

from .errors import ExecutionFault


__all__ = (
    'MISSING',
    'InsertionSet',
    'BINARY_OPS',
    'UNARY_OPS',
    'COMPARE_OPS',
    'AUGMENTED_OPS',
    'apply_binary',
    'to_runtime',
    'type_name',
    'canonicalize',
    'equivalent',
    'encode',
    'decode',
    'canonical_json',
    'render_literal',
    'numeric_atoms',
    'decimal_places',
)

# Results with more bits than this are refused rather than computed.
MAX_INT_BITS = 1 << 20

# Largest integer magnitude that survives a round trip through binary64.
SAFE_INT = 2**53


class _Missing:
    """Marks an absent value where ``None`` is a legitimate one."""

    _instance: _Missing | None = None

    def __new__(cls) -> _Missing:
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __bool__(self) -> bool:
        return False

    def __repr__(self) -> str:
        return 'MISSING'


MISSING: Any = _Missing()


class InsertionSet(MutableSet):
    """The runtime set type: a set that iterates in insertion order.

    Iteration order never depends on hashing, so runs are reproducible.
    """

    __slots__ = ('_items',)

    def __init__(self, iterable: Iterable[Any] = ()) -> None:
        self._items: dict[Any, None] = dict.fromkeys(iterable)

    @classmethod
    def _from_iterable(cls, it: Iterable[Any]) -> InsertionSet:
        return cls(it)

    def __contains__(self, item: object) -> bool:
        return item in self._items

    def __iter__(self) -> Iterator[Any]:
        return iter(self._items)

    def __len__(self) -> int:
        return len(self._items)

    def add(self, item: Any) -> None:
        self._items[item] = None

    def discard(self, item: Any) -> None:
        self._items.pop(item, None)

    def remove(self, item: Any) -> None:
        del self._items[item]

    def clear(self) -> None:
        self._items.clear()

    def copy(self) -> InsertionSet:
        return InsertionSet(self._items)

    def update(self, *iterables: Iterable[Any]) -> None:
        for it in iterables:
            self._items.update(dict.fromkeys(it))

    def __repr__(self) -> str:
        if not self._items:
            return 'set()'
        return '{' + ', '.join(repr(i) for i in self._items) + '}'


def _contains(container: Any, item: Any) -> bool:
    return item in container


BINARY_OPS: dict[str, Callable[[Any, Any], Any]] = {
    '+': operator.add,
    '-': operator.sub,
    '*': operator.mul,
    '/': operator.truediv,
    '//': operator.floordiv,
    '%': operator.mod,
    '**': operator.pow,
    '<<': operator.lshift,
    '>>': operator.rshift,
    '&': operator.and_,
    '|': operator.or_,
    '^': operator.xor,
}

AUGMENTED_OPS: dict[str, Callable[[Any, Any], Any]] = {
    '+': operator.iadd,
    '-': operator.isub,
    '*': operator.imul,
    '/': operator.itruediv,
    '//': operator.ifloordiv,
    '%': operator.imod,
    '**': operator.ipow,
    '<<': operator.ilshift,
    '>>': operator.irshift,
    '&': operator.iand,
    '|': operator.ior,
    '^': operator.ixor,
}

UNARY_OPS: dict[str, Callable[[Any], Any]] = {
    '-': operator.neg,
    '+': operator.pos,
    '~': operator.invert,
    'not': operator.not_,
}

COMPARE_OPS: dict[str, Callable[[Any, Any], bool]] = {
    '<': operator.lt,
    '>': operator.gt,
    '==': operator.eq,
    '>=': operator.ge,
    '<=': operator.le,
    '!=': operator.ne,
    'in': lambda l, r: _contains(r, l),
    'not in': lambda l, r: not _contains(r, l),
    'is': operator.is_,
    'is not': operator.is_not,
}


def _is_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def apply_binary(op: str, left: Any, right: Any, *, augmented: bool = False) -> Any:
    """Applies a binary operator with the language's semantics.

    Floor division and modulo take the sign of the divisor and integers never
    overflow, but results too large to represent sensibly are refused.

    Raises
    ------
    :class:`~stepwise.ExecutionFault`
        ``value-too-large`` for huge powers and shifts. Python errors raised by the
        operator itself propagate to the caller.
    """
    if op == '**' and _is_int(left) and _is_int(right) and right > 0 and abs(left) > 1:
        if right * left.bit_length() > MAX_INT_BITS:
            raise ExecutionFault('value-too-large', f'{left} ** {right} is too large')
    elif op == '<<' and _is_int(left) and _is_int(right) and left:
        if right + left.bit_length() > MAX_INT_BITS:
            raise ExecutionFault('value-too-large', f'{left} << {right} is too large')
    table = AUGMENTED_OPS if augmented else BINARY_OPS
    return table[op](left, right)


def type_name(value: Any) -> str:
    if isinstance(value, InsertionSet):
        return 'set'
    return type(value).__name__


def to_runtime(value: Any) -> Any:
    """A deep copy of ``value`` using the runtime types (sets become :class:`InsertionSet`)."""
    if isinstance(value, list):
        return [to_runtime(v) for v in value]
    if isinstance(value, tuple):
        return tuple(to_runtime(v) for v in value)
    if isinstance(value, dict):
        return {to_runtime(k): to_runtime(v) for k, v in value.items()}
    if isinstance(value, (set, frozenset, InsertionSet)):
        items = [to_runtime(v) for v in value]
        if isinstance(value, (set, frozenset)):
            items.sort(key=_order_key)
        return InsertionSet(items)
    return value


# ==== canonical form ====


def _order_key(value: Any) -> str:
    return json.dumps(encode(value), sort_keys=True)


def _freeze(value: Any) -> Any:
    if isinstance(value, list):
        return tuple(_freeze(v) for v in value)
    if isinstance(value, dict):
        return tuple(sorted(((k, _freeze(v)) for k, v in value.items()), key=repr))
    return value


def canonicalize(value: Any) -> Any:
    """The comparison form of a value.

    Tuples, ranges and other sequences become lists, sets become sorted lists,
    floats are rounded to 6 decimal places and mapping keys are canonicalized.
    """
    if value is None or isinstance(value, (bool, int, str)):
        return value
    if isinstance(value, float):
        return round(value, 6) if math.isfinite(value) else value
    if isinstance(value, Mapping):
        return {_freeze(canonicalize(k)): canonicalize(v) for k, v in value.items()}
    if isinstance(value, (InsertionSet, set, frozenset)):
        return [canonicalize(v) for v in sorted(value, key=_order_key)]
    if isinstance(value, Iterable):
        return [canonicalize(v) for v in value]
    return value


def _equivalent(a: Any, b: Any, rel_tol: float) -> bool:
    if isinstance(a, bool) or isinstance(b, bool):
        return isinstance(a, bool) and isinstance(b, bool) and a == b
    if isinstance(a, (int, float)) and isinstance(b, (int, float)):
        if _is_int(a) and _is_int(b):
            return a == b
        if not (math.isfinite(a) and math.isfinite(b)):
            return a == b
        return math.isclose(a, b, rel_tol=rel_tol, abs_tol=0.0)
    if isinstance(a, list) and isinstance(b, list):
        return len(a) == len(b) and all(_equivalent(x, y, rel_tol) for x, y in zip(a, b))
    if isinstance(a, dict) and isinstance(b, dict):
        return a.keys() == b.keys() and all(_equivalent(a[k], b[k], rel_tol) for k in a)
    return type(a) is type(b) and a == b


def equivalent(a: Any, b: Any, *, rel_tol: float = 1e-6) -> bool:
    """Whether two values are equal after canonicalization.

    Integers compare exactly; floats compare after 6-decimal rounding within a
    relative tolerance of 1e-6. Booleans never equal numbers. Symmetric.
    """
    return _equivalent(canonicalize(a), canonicalize(b), rel_tol)


# ==== JSON encoding ====

_TAGS = frozenset({'__int__', '__float__', '__map__'})


def encode(value: Any) -> Any:
    """Converts a runtime value into a JSON-compatible structure.

    Tuples and sets become arrays (sets sorted), large integers and non-finite
    floats become tagged objects, and mappings with non-string keys become
    ``{"__map__": [[key, value], ...]}``.
    """
    if value is None or isinstance(value, (bool, str)):
        return value
    if isinstance(value, int):
        return value if abs(value) <= SAFE_INT else {'__int__': str(value)}
    if isinstance(value, float):
        return value if math.isfinite(value) else {'__float__': repr(value)}
    if isinstance(value, Mapping):
        keys = list(value.keys())
        if all(isinstance(k, str) for k in keys) and not (len(keys) == 1 and keys[0] in _TAGS):
            return {k: encode(v) for k, v in value.items()}
        return {'__map__': [[encode(k), encode(v)] for k, v in value.items()]}
    if isinstance(value, (InsertionSet, set, frozenset)):
        return sorted((encode(v) for v in value), key=lambda e: json.dumps(e, sort_keys=True))
    if isinstance(value, Iterable):
        return [encode(v) for v in value]
    raise TypeError(f'Cannot encode a value of type {type_name(value)}')


def _hashable(value: Any) -> Any:
    if isinstance(value, list):
        return tuple(_hashable(v) for v in value)
    return value


def decode(obj: Any) -> Any:
    """The inverse of :func:`encode`, up to tuples and sets (which come back as lists)."""
    if isinstance(obj, list):
        return [decode(v) for v in obj]
    if isinstance(obj, dict):
        if len(obj) == 1:
            (tag, payload), = obj.items()
            if tag == '__int__':
                return int(payload)
            if tag == '__float__':
                return float(payload)
            if tag == '__map__':
                return {_hashable(decode(k)): decode(v) for k, v in payload}
        return {k: decode(v) for k, v in obj.items()}
    return obj


def canonical_json(value: Any) -> str:
    """Compact JSON with sorted keys; identical values give identical text."""
    return json.dumps(encode(value), sort_keys=True, ensure_ascii=False, separators=(',', ':'))


# ==== literal rendering ====


def render_literal(value: Any) -> str:
    """Renders a value as a literal of the corpus language.

    The result parses back (see :func:`stepwise.harness.parse_literal`) to an
    equivalent value.
    """
    if value is None or isinstance(value, (bool, int, str)):
        return repr(value)
    if isinstance(value, float):
        if math.isnan(value):
            return 'nan'
        if math.isinf(value):
            return 'inf' if value > 0 else '-inf'
        return repr(value)
    if isinstance(value, tuple):
        if len(value) == 1:
            return f'({render_literal(value[0])},)'
        return '(' + ', '.join(render_literal(v) for v in value) + ')'
    if isinstance(value, Mapping):
        items = (f'{render_literal(k)}: {render_literal(v)}' for k, v in value.items())
        return '{' + ', '.join(items) + '}'
    if isinstance(value, (InsertionSet, set, frozenset)):
        if not value:
            return 'set()'
        return '{' + ', '.join(render_literal(v) for v in value) + '}'
    if isinstance(value, Iterable):
        return '[' + ', '.join(render_literal(v) for v in value) + ']'
    raise TypeError(f'Cannot render a value of type {type_name(value)}')


# ==== inspection ====


def numeric_atoms(value: Any) -> Iterator[int | float]:
    """Every number inside a value, including mapping keys. Booleans are not numbers."""
    if isinstance(value, bool) or value is None or isinstance(value, str):
        return
    if isinstance(value, (int, float)):
        yield value
    elif isinstance(value, Mapping):
        for k, v in value.items():
            yield from numeric_atoms(k)
            yield from numeric_atoms(v)
    elif isinstance(value, Iterable):
        for v in value:
            yield from numeric_atoms(v)


def decimal_places(number: int | float) -> int:
    """Decimal places in the shortest round-tripping rendering of ``number``."""
    if isinstance(number, int) or not math.isfinite(number):
        return 0
    exponent = decimal.Decimal(repr(number)).as_tuple().exponent
    assert isinstance(exponent, int)
    return max(0, -exponent)
