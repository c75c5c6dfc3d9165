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

from collections.abc import Callable, Iterable, Iterator, Mapping
from dataclasses import dataclass, field
from typing import Any, Protocol

from .errors import ExecutionFault
from .values import InsertionSet, type_name


__all__ = (
    'Budget',
    'Builtin',
    'Module',
    'MethodSpec',
    'BUILTINS',
    'MODULES',
    'METHODS',
    'FUNCTION_NAMES',
    'METHOD_NAMES',
    'heappush',
    'heappop',
    'heapify',
    'call_method',
)


class Budget(Protocol):
    """What builtins need from the running execution."""

    def check_size(self, size: int) -> None:
        ...

    def bounded(self, iterable: Iterable[Any]) -> Iterator[Any]:
        ...

    def materialize(self, iterable: Iterable[Any]) -> list[Any]:
        ...


@dataclass(frozen=True)
class Builtin:
    """A function from the builtin catalogue.

    Attributes
    ----------
    name: :class:`str`
        The name code calls it by
    impl: Callable
        The implementation; receives the execution budget first
    min_args: :class:`int`
        Fewest positional arguments accepted
    max_args: Optional[:class:`int`]
        Most positional arguments accepted, ``None`` for no limit
    keywords: FrozenSet[:class:`str`]
        Accepted keyword arguments
    """

    name: str
    impl: Callable[..., Any] = field(repr=False)
    min_args: int
    max_args: int | None
    keywords: frozenset[str] = frozenset()

    def invoke(self, budget: Budget, args: list[Any], kwargs: dict[str, Any]) -> Any:
        if len(args) < self.min_args or (self.max_args is not None and len(args) > self.max_args):
            raise ExecutionFault(
                'arity-mismatch', f'{self.name}() does not take {len(args)} positional argument(s)'
            )
        unknown = sorted(kwargs.keys() - self.keywords)
        if unknown:
            raise ExecutionFault(
                'type-mismatch', f'{self.name}() got an unexpected keyword {unknown[0]!r}'
            )
        return self.impl(budget, *args, **kwargs)

    def __str__(self) -> str:
        return f'<builtin {self.name}>'


@dataclass(frozen=True)
class Module:
    """A whitelisted module: a namespace of builtins."""

    name: str
    functions: Mapping[str, Builtin]

    def __str__(self) -> str:
        return f'<module {self.name}>'


# ==== binary min-heap ====


def _require_list(heap: Any, name: str) -> list[Any]:
    if not isinstance(heap, list):
        raise TypeError(f'{name}() requires a list, not {type_name(heap)}')
    return heap


def _sift_up(heap: list[Any], i: int) -> None:
    while i > 0:
        parent = (i - 1) // 2
        if heap[i] < heap[parent]:
            heap[i], heap[parent] = heap[parent], heap[i]
            i = parent
        else:
            break


def _sift_down(heap: list[Any], i: int) -> None:
    n = len(heap)
    while True:
        child = 2 * i + 1
        if child >= n:
            break
        right = child + 1
        if right < n and heap[right] < heap[child]:
            child = right
        if heap[child] < heap[i]:
            heap[i], heap[child] = heap[child], heap[i]
            i = child
        else:
            break


def heappush(heap: list[Any], item: Any) -> None:
    """Pushes ``item`` onto the array-backed min-heap."""
    heap.append(item)
    _sift_up(heap, len(heap) - 1)


def heappop(heap: list[Any]) -> Any:
    """Removes and returns a minimal element.

    Raises
    ------
    IndexError
        The heap is empty.
    """
    last = heap.pop()
    if not heap:
        return last
    top = heap[0]
    heap[0] = last
    _sift_down(heap, 0)
    return top


def heapify(heap: list[Any]) -> None:
    """Rearranges the list into heap order in place."""
    for i in reversed(range(len(heap) // 2)):
        _sift_down(heap, i)


def _heappush(budget: Budget, heap: Any, item: Any) -> None:
    heappush(_require_list(heap, 'heappush'), item)
    budget.check_size(len(heap))


def _heappop(budget: Budget, heap: Any) -> Any:
    return heappop(_require_list(heap, 'heappop'))


def _heapify(budget: Budget, heap: Any) -> None:
    heapify(_require_list(heap, 'heapify'))


# ==== functions ====


def _sorted(budget: Budget, iterable: Any, key: Any = None, reverse: Any = False) -> list[Any]:
    return sorted(budget.materialize(iterable), key=key, reverse=bool(reverse))


def _extreme(pick: Callable[..., Any]) -> Callable[..., Any]:
    def impl(budget: Budget, *args: Any, key: Any = None) -> Any:
        items = budget.materialize(args[0]) if len(args) == 1 else list(args)
        if not items:
            raise ValueError(f'{pick.__name__}() of an empty sequence')
        return pick(items, key=key)

    return impl


def _sum(budget: Budget, iterable: Any, start: Any = 0) -> Any:
    return sum(budget.materialize(iterable), start)


def _dict(budget: Budget, source: Any = ()) -> dict[Any, Any]:
    if isinstance(source, Mapping):
        return dict(source)
    out = {}
    for pair in budget.bounded(source):
        key, value = pair
        out[key] = value
    return out


def _zip(budget: Budget, *iterables: Any) -> Iterator[tuple[Any, ...]]:
    return zip(*(budget.bounded(it) for it in iterables))


def _builtin(
    name: str, impl: Callable[..., Any], min_args: int, max_args: int | None, *keywords: str
) -> Builtin:
    return Builtin(name, impl, min_args, max_args, frozenset(keywords))


_CATALOGUE = [
    _builtin('len', lambda b, x: len(x), 1, 1),
    _builtin('range', lambda b, *a: range(*a), 1, 3),
    _builtin('enumerate', lambda b, it, start=0: enumerate(b.bounded(it), start), 1, 2),
    _builtin('sorted', _sorted, 1, 1, 'key', 'reverse'),
    _builtin('min', _extreme(min), 1, None, 'key'),
    _builtin('max', _extreme(max), 1, None, 'key'),
    _builtin('abs', lambda b, x: abs(x), 1, 1),
    _builtin('sum', _sum, 1, 2),
    _builtin('list', lambda b, it=(): b.materialize(it), 0, 1),
    _builtin('tuple', lambda b, it=(): tuple(b.materialize(it)), 0, 1),
    _builtin('set', lambda b, it=(): InsertionSet(b.materialize(it)), 0, 1),
    _builtin('dict', _dict, 0, 1),
    _builtin('zip', _zip, 1, None),
    _builtin('reversed', lambda b, seq: reversed(seq), 1, 1),
    _builtin('any', lambda b, it: any(b.bounded(it)), 1, 1),
    _builtin('all', lambda b, it: all(b.bounded(it)), 1, 1),
    _builtin('int', lambda b, *a: int(*a), 0, 2),
    _builtin('float', lambda b, *a: float(*a), 0, 1),
    _builtin('str', lambda b, *a: str(*a), 0, 1),
    _builtin('bool', lambda b, *a: bool(*a), 0, 1),
]

HEAPQ = Module(
    'heapq',
    {
        f.name: f
        for f in (
            _builtin('heappush', _heappush, 2, 2),
            _builtin('heappop', _heappop, 1, 1),
            _builtin('heapify', _heapify, 1, 1),
        )
    },
)

#: Free functions by name.
BUILTINS: dict[str, Builtin] = {b.name: b for b in _CATALOGUE}

#: Modules that may be imported.
MODULES: dict[str, Module] = {HEAPQ.name: HEAPQ}

FUNCTION_NAMES = frozenset(BUILTINS)


# ==== methods ====


@dataclass(frozen=True)
class MethodSpec:
    min_args: int
    max_args: int
    keywords: frozenset[str] = frozenset()
    grows: bool = False


def _spec(min_args: int, max_args: int, *keywords: str, grows: bool = False) -> MethodSpec:
    return MethodSpec(min_args, max_args, frozenset(keywords), grows)


# Checked in order, so the set type comes before the general ones.
METHODS: dict[str, list[tuple[type, MethodSpec]]] = {
    'append': [(list, _spec(1, 1, grows=True))],
    'extend': [(list, _spec(1, 1, grows=True))],
    'insert': [(list, _spec(2, 2, grows=True))],
    'pop': [(InsertionSet, _spec(0, 0)), (list, _spec(0, 1)), (dict, _spec(1, 2))],
    'clear': [(InsertionSet, _spec(0, 0)), (list, _spec(0, 0)), (dict, _spec(0, 0))],
    'copy': [(InsertionSet, _spec(0, 0)), (list, _spec(0, 0)), (dict, _spec(0, 0))],
    'index': [(list, _spec(1, 3))],
    'count': [(list, _spec(1, 1)), (str, _spec(1, 1))],
    'sort': [(list, _spec(0, 0, 'key', 'reverse'))],
    'reverse': [(list, _spec(0, 0))],
    'get': [(dict, _spec(1, 2))],
    'keys': [(dict, _spec(0, 0))],
    'values': [(dict, _spec(0, 0))],
    'items': [(dict, _spec(0, 0))],
    'setdefault': [(dict, _spec(1, 2, grows=True))],
    'add': [(InsertionSet, _spec(1, 1, grows=True))],
    'remove': [(InsertionSet, _spec(1, 1)), (list, _spec(1, 1))],
    'discard': [(InsertionSet, _spec(1, 1))],
    'update': [(InsertionSet, _spec(1, 1, grows=True))],
    'join': [(str, _spec(1, 1))],
    'split': [(str, _spec(0, 2))],
    'strip': [(str, _spec(0, 1))],
}

METHOD_NAMES = frozenset(METHODS)


def call_method(
    budget: Budget, receiver: Any, name: str, args: list[Any], kwargs: dict[str, Any]
) -> Any:
    """Calls a catalogue method on a runtime value.

    Raises
    ------
    :class:`~stepwise.ExecutionFault`
        The receiver has no such method, or the arguments do not fit it.
    """
    for kind, spec in METHODS.get(name, ()):
        if isinstance(receiver, kind):
            break
    else:
        raise ExecutionFault('type-mismatch', f'{type_name(receiver)} has no method {name!r}')

    if not spec.min_args <= len(args) <= spec.max_args:
        raise ExecutionFault(
            'arity-mismatch',
            f'{type_name(receiver)}.{name}() does not take {len(args)} argument(s)',
        )
    unknown = sorted(kwargs.keys() - spec.keywords)
    if unknown:
        raise ExecutionFault('type-mismatch', f'{name}() got an unexpected keyword {unknown[0]!r}')
    if name == 'join':
        args = [budget.materialize(args[0])]
    elif name == 'extend':
        args = [budget.materialize(args[0])]
    result = getattr(receiver, name)(*args, **kwargs)
    if spec.grows:
        budget.check_size(len(receiver))
    return result
