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

import logging
import sys
from collections.abc import Callable, Iterable, Iterator, Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Any, TypeVar

from . import syntax as ast
from .builtins import BUILTINS, MODULES, Builtin, Module, call_method
from .errors import *
from .subset import require_subset
from .utils import bound_names, target_names
from .values import (
    BINARY_OPS,
    COMPARE_OPS,
    UNARY_OPS,
    InsertionSet,
    apply_binary,
    decode,
    encode,
    to_runtime,
    type_name,
)


if TYPE_CHECKING:
    from .corpus import TestCase


__all__ = ('Limits', 'Status', 'ExecutionResult', 'ExecutionContext', 'Closure', 'Interpreter')

log = logging.getLogger(__name__)

N = TypeVar('N', bound=ast.Node)

# Python frames used per interpreted call, with room for nested blocks.
_FRAMES_PER_CALL = 20


@dataclass(frozen=True)
class Limits:
    """Execution budgets.

    Attributes
    ----------
    max_steps: :class:`int`
        Statements (and loop or comprehension iterations) one execution may run
    max_recursion: :class:`int`
        Deepest call nesting allowed
    max_collection: :class:`int`
        Most elements any one container may hold
    """

    max_steps: int = 10**6
    max_recursion: int = 1000
    max_collection: int = 10**6

    def __post_init__(self) -> None:
        for name in ('max_steps', 'max_recursion', 'max_collection'):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value <= 0:
                raise ConfigError(f'{name} must be a positive integer, not {value!r}')

    _ALIASES = {'steps': 'max_steps', 'recursion': 'max_recursion', 'collection': 'max_collection'}

    @classmethod
    def from_string(cls, text: str) -> Limits:
        """Parses ``steps=N,recursion=M,collection=K``; omitted budgets keep their defaults."""
        values: dict[str, int] = {}
        for part in filter(None, (p.strip() for p in text.split(','))):
            key, sep, raw = part.partition('=')
            name = cls._ALIASES.get(key.strip())
            if not sep or name is None:
                raise ConfigError(
                    f'Invalid limit {part!r}, expected steps=, recursion= or collection='
                )
            try:
                values[name] = int(raw)
            except ValueError:
                raise ConfigError(f'Invalid value for {key.strip()}: {raw!r}') from None
        return cls(**values)


class Status(str, Enum):
    OK = 'ok'
    RUNTIME_ERROR = 'runtime_error'
    LIMIT_EXCEEDED = 'limit_exceeded'


@dataclass
class ExecutionResult:
    """The outcome of running a function on one input.

    Attributes
    ----------
    status: :class:`Status`
        ``ok`` exactly when the function returned an ``(output, stats)`` pair with
        string-keyed stats
    output: Any
        The first element of the returned pair
    stats: Dict[:class:`str`, Any]
        The second element of the returned pair
    steps: :class:`int`
        Steps taken; never more than the step budget
    error_kind: Optional[:class:`str`]
        The fault kind for runtime errors, or the exhausted budget
    message: Optional[:class:`str`]
        A human readable error
    span: Optional[:class:`~stepwise.syntax.Span`]
        Where the error happened, if known
    """

    status: Status
    output: Any = None
    stats: dict[str, Any] = field(default_factory=dict)
    steps: int = 0
    error_kind: str | None = None
    message: str | None = None
    span: ast.Span | None = None

    @property
    def ok(self) -> bool:
        return self.status is Status.OK

    @property
    def which(self) -> str | None:
        """The exhausted budget, for ``limit_exceeded`` results."""
        return self.error_kind if self.status is Status.LIMIT_EXCEEDED else None

    def to_record(self) -> dict[str, Any]:
        record: dict[str, Any] = {'status': self.status.value, 'steps': self.steps}
        if self.ok:
            record['output'] = encode(self.output)
            record['stats'] = encode(self.stats)
        else:
            record['error'] = {
                'kind': self.error_kind,
                'message': self.message,
                'span': list(self.span) if self.span is not None else None,
            }
        return record

    @classmethod
    def from_record(cls, record: Mapping[str, Any]) -> ExecutionResult:
        error = record.get('error') or {}
        span = error.get('span')
        return cls(
            status=Status(record['status']),
            output=decode(record.get('output')),
            stats=decode(record.get('stats') or {}),
            steps=record.get('steps', 0),
            error_kind=error.get('kind'),
            message=error.get('message'),
            span=ast.Span(*span) if span else None,
        )

    def __str__(self) -> str:
        if self.ok:
            return f'{self.output!r}, {self.stats!r}'
        return f'{self.status.value}: {self.error_kind}: {self.message}'


class ExecutionContext:
    """Tracks one execution's budgets so that every execution halts.

    Attributes
    ----------
    limits: :class:`Limits`
        The budgets for this execution
    """

    def __init__(self, limits: Limits | None = None) -> None:
        self.limits = limits or Limits()
        self.steps = 0
        self.depth = 0
        self.reset()

    def reset(self) -> None:
        """Called at the start of each execution."""
        self.steps = 0
        self.depth = 0

    def count_step(self) -> None:
        """Called before each statement and each loop or comprehension iteration.

        Raises
        ------
        :class:`~stepwise.LimitExceeded`
            The step budget is spent.
        """
        if self.steps >= self.limits.max_steps:
            raise LimitExceeded('max_steps')
        self.steps += 1

    def enter_call(self) -> None:
        self.depth += 1
        if self.depth > self.limits.max_recursion:
            raise LimitExceeded('max_recursion')

    def exit_call(self) -> None:
        self.depth -= 1

    def check_size(self, size: int) -> None:
        if size > self.limits.max_collection:
            raise LimitExceeded('max_collection')

    def bounded(self, iterable: Iterable[Any]) -> Iterator[Any]:
        """Iterates, refusing to produce more elements than a container may hold."""
        cap = self.limits.max_collection
        for i, item in enumerate(iterable):
            if i >= cap:
                raise LimitExceeded('max_collection')
            yield item

    def materialize(self, iterable: Iterable[Any]) -> list[Any]:
        sized = isinstance(iterable, Sequence | InsertionSet | Mapping)
        if sized and not isinstance(iterable, range):
            self.check_size(len(iterable))
            return list(iterable)
        return list(self.bounded(iterable))


class _Signal(Exception):
    pass


class _LoopSignal(_Signal):
    keyword = ''

    def __init__(self, span: ast.Span | None = None) -> None:
        self.span = span


class _Break(_LoopSignal):
    keyword = 'break'


class _Continue(_LoopSignal):
    keyword = 'continue'


class _Return(_Signal):
    def __init__(self, value: Any) -> None:
        self.value = value


class _Frame:
    __slots__ = ('vars', 'local_names', 'nonlocal_names', 'parent')

    def __init__(
        self,
        vars: dict[str, Any],
        local_names: frozenset[str] = frozenset(),
        nonlocal_names: frozenset[str] = frozenset(),
        parent: _Frame | None = None,
    ) -> None:
        self.vars = vars
        self.local_names = local_names
        self.nonlocal_names = nonlocal_names
        self.parent = parent

    def lookup(self, name: str) -> Any:
        frame: _Frame | None = self
        while frame is not None:
            if name in frame.vars:
                return frame.vars[name]
            if name in frame.local_names:
                raise ExecutionFault('unbound-name', f'local name {name!r} used before assignment')
            frame = frame.parent
        try:
            return BUILTINS[name]
        except KeyError:
            raise ExecutionFault('unbound-name', f'name {name!r} is not defined') from None

    def store(self, name: str, value: Any) -> None:
        if name in self.nonlocal_names:
            frame = self.parent
            while frame is not None and name not in frame.local_names:
                frame = frame.parent
            if frame is None:
                raise ExecutionFault('unbound-name', f'no binding for nonlocal {name!r}')
            frame.vars[name] = value
        else:
            self.vars[name] = value


class Closure:
    """A function value: a definition plus the frame it was defined in.

    Closures are plain Python callables, so builtins such as ``sorted`` can use
    them as keys.
    """

    __slots__ = ('node', 'frame', 'machine')

    def __init__(self, node: ast.FunctionDef, frame: _Frame, machine: _Machine) -> None:
        self.node = node
        self.frame = frame
        self.machine = machine

    def __call__(self, *args: Any) -> Any:
        return self.machine.call_closure(self, list(args), {})

    def __repr__(self) -> str:
        return f'<function {self.node.name}>'


def _declared_nonlocals(fn: ast.FunctionDef) -> frozenset[str]:
    names: set[str] = set()
    stack: list[ast.Node] = list(fn.body)
    while stack:
        node = stack.pop()
        if isinstance(node, ast.Nonlocal):
            names.update(node.names)
        elif not isinstance(node, (ast.FunctionDef, ast.Lambda, ast.ClassDef)):
            stack.extend(node.children)
    return frozenset(names)


def _fault_for(exc: Exception) -> ExecutionFault | LimitExceeded:
    if isinstance(exc, RecursionError):
        return LimitExceeded('max_recursion')
    if isinstance(exc, MemoryError):
        return LimitExceeded('max_collection')
    if isinstance(exc, IndexError):
        return ExecutionFault('index-out-of-range', str(exc) or 'index out of range')
    if isinstance(exc, KeyError):
        message = f'key {exc.args[0]!r} is absent' if exc.args else 'key is absent'
        return ExecutionFault('key-absent', message)
    if isinstance(exc, ZeroDivisionError):
        return ExecutionFault('division-by-zero', str(exc))
    if isinstance(exc, (TypeError, AttributeError)):
        return ExecutionFault('type-mismatch', str(exc))
    if isinstance(exc, OverflowError):
        return ExecutionFault('value-too-large', str(exc))
    return ExecutionFault('value-error', str(exc))


class _Machine:
    """The state of one execution: its budgets and function scopes."""

    def __init__(self, context: ExecutionContext) -> None:
        self.context = context
        self._scopes: dict[int, tuple[frozenset[str], frozenset[str]]] = {}

    def _get_executor(self, _type: type[N]) -> Callable[[N, _Frame], None]:
        _nodes = {
            ast.FunctionDef: self._exec_functiondef,
            ast.Return: self._exec_return,
            ast.Assign: self._exec_assign,
            ast.AugAssign: self._exec_augassign,
            ast.ExprStmt: self._exec_exprstmt,
            ast.Pass: self._exec_pass,
            ast.Break: self._exec_break,
            ast.Continue: self._exec_continue,
            ast.Nonlocal: self._exec_pass,
            ast.Import: self._exec_import,
            ast.If: self._exec_if,
            ast.While: self._exec_while,
            ast.For: self._exec_for,
        }
        return _nodes.get(_type, self._unsupported)  # type: ignore

    def _get_evaluator(self, _type: type[N]) -> Callable[[N, _Frame], Any]:
        _nodes = {
            ast.Name: self._eval_name,
            ast.Constant: self._eval_constant,
            ast.TupleDisplay: self._eval_tuple,
            ast.ListDisplay: self._eval_list,
            ast.SetDisplay: self._eval_set,
            ast.DictDisplay: self._eval_dict,
            ast.ListComp: self._eval_listcomp,
            ast.SetComp: self._eval_setcomp,
            ast.DictComp: self._eval_dictcomp,
            ast.GeneratorExp: self._eval_generatorexp,
            ast.BinOp: self._eval_binop,
            ast.UnaryOp: self._eval_unaryop,
            ast.BoolOp: self._eval_boolop,
            ast.Compare: self._eval_compare,
            ast.IfExp: self._eval_ifexp,
            ast.Call: self._eval_call,
            ast.Subscript: self._eval_subscript,
            ast.Slice: self._eval_slice,
            ast.Attribute: self._eval_attribute,
        }
        return _nodes.get(_type, self._unsupported)  # type: ignore

    def _unsupported(self, node: ast.Node, frame: _Frame) -> Any:
        raise ExecutionFault(
            'unsupported-construct', f'{type(node).__name__} cannot be executed', node.span
        )

    # ==== calls ====

    def _scope(self, fn: ast.FunctionDef) -> tuple[frozenset[str], frozenset[str]]:
        key = id(fn)
        if key not in self._scopes:
            self._scopes[key] = (frozenset(bound_names(fn)), _declared_nonlocals(fn))
        return self._scopes[key]

    def call_closure(self, closure: Closure, args: list[Any], kwargs: dict[str, Any]) -> Any:
        fn = closure.node
        params = fn.param_names
        if kwargs:
            raise ExecutionFault('type-mismatch', f'{fn.name}() takes no keyword arguments')
        if len(args) != len(params):
            raise ExecutionFault(
                'arity-mismatch',
                f'{fn.name}() takes {len(params)} argument(s) but {len(args)} were given',
            )
        local_names, nonlocal_names = self._scope(fn)
        frame = _Frame(dict(zip(params, args)), local_names, nonlocal_names, closure.frame)
        self.context.enter_call()
        try:
            self.exec_block(fn.body, frame)
        except _Return as ret:
            return ret.value
        except _LoopSignal as signal:
            raise ExecutionFault(
                'unsupported-construct', f'{signal.keyword!r} outside a loop', signal.span
            ) from None
        finally:
            self.context.exit_call()
        return None

    def _as_callable(self, value: Any) -> Any:
        if isinstance(value, Builtin):
            return lambda *args: value.invoke(self.context, list(args), {})
        return value

    def _invoke(self, callee: Any, args: list[Any], kwargs: dict[str, Any]) -> Any:
        if isinstance(callee, Closure):
            return self.call_closure(callee, args, kwargs)
        if isinstance(callee, Builtin):
            if 'key' in kwargs:
                kwargs['key'] = self._as_callable(kwargs['key'])
            return callee.invoke(self.context, args, kwargs)
        raise ExecutionFault('type-mismatch', f'{type_name(callee)} object is not callable')

    # ==== statements ====

    def exec_block(self, body: Sequence[ast.Statement], frame: _Frame) -> None:
        for stmt in body:
            self.exec(stmt, frame)

    def exec(self, node: ast.Statement, frame: _Frame) -> None:
        self.context.count_step()
        try:
            self._get_executor(type(node))(node, frame)
        except (_Signal, LimitExceeded):
            raise
        except ExecutionFault as fault:
            if fault.span is None:
                fault.span = node.span
            raise
        except Exception as exc:
            fault = _fault_for(exc)
            if isinstance(fault, ExecutionFault):
                fault.span = node.span
            raise fault from None

    def _exec_functiondef(self, node: ast.FunctionDef, frame: _Frame) -> None:
        frame.store(node.name, Closure(node, frame, self))

    def _exec_return(self, node: ast.Return, frame: _Frame) -> None:
        raise _Return(None if node.value is None else self.eval(node.value, frame))

    def _exec_assign(self, node: ast.Assign, frame: _Frame) -> None:
        value = self.eval(node.value, frame)
        for target in node.targets:
            self.assign(target, value, frame)

    def _exec_augassign(self, node: ast.AugAssign, frame: _Frame) -> None:
        # the target is read before the right-hand side runs
        target = node.target
        if isinstance(target, ast.Name):
            current = frame.lookup(target.id)
            value = self.eval(node.value, frame)
            frame.store(target.id, self._binary(node.op, current, value, augmented=True))
        elif isinstance(target, ast.Subscript):
            container = self.eval(target.value, frame)
            index = self.eval(target.index, frame)
            current = container[index]
            value = self.eval(node.value, frame)
            container[index] = self._binary(node.op, current, value, augmented=True)
        else:
            self._unsupported(target, frame)

    def _exec_exprstmt(self, node: ast.ExprStmt, frame: _Frame) -> None:
        self.eval(node.value, frame)

    def _exec_pass(self, node: ast.Statement, frame: _Frame) -> None:
        pass

    def _exec_break(self, node: ast.Break, frame: _Frame) -> None:
        raise _Break(node.span)

    def _exec_continue(self, node: ast.Continue, frame: _Frame) -> None:
        raise _Continue(node.span)

    def _module(self, name: str) -> Module:
        try:
            return MODULES[name]
        except KeyError:
            raise ExecutionFault(
                'unsupported-construct', f'module {name!r} is not available'
            ) from None

    def _exec_import(self, node: ast.Import, frame: _Frame) -> None:
        for name, alias in node.names:
            frame.store(alias or name, self._module(name))

    def _exec_if(self, node: ast.If, frame: _Frame) -> None:
        if self.eval(node.test, frame):
            self.exec_block(node.body, frame)
            return
        for clause in node.elifs:
            if self.eval(clause.test, frame):
                self.exec_block(clause.body, frame)
                return
        self.exec_block(node.orelse, frame)

    def _loop_body(self, body: Sequence[ast.Statement], frame: _Frame) -> bool:
        """Runs one iteration; returns False when the loop should stop."""
        try:
            self.exec_block(body, frame)
        except _Break:
            return False
        except _Continue:
            pass
        return True

    def _exec_while(self, node: ast.While, frame: _Frame) -> None:
        while self.eval(node.test, frame):
            self.context.count_step()
            if not self._loop_body(node.body, frame):
                return
        self.exec_block(node.orelse, frame)

    def _exec_for(self, node: ast.For, frame: _Frame) -> None:
        for item in self._iterate(self.eval(node.iter, frame)):
            self.context.count_step()
            self.assign(node.target, item, frame)
            if not self._loop_body(node.body, frame):
                return
        self.exec_block(node.orelse, frame)

    # ==== assignment ====

    def assign(self, target: ast.Expression, value: Any, frame: _Frame) -> None:
        if isinstance(target, ast.Name):
            frame.store(target.id, value)
        elif isinstance(target, (ast.TupleDisplay, ast.ListDisplay)):
            self._unpack(target.elts, value, frame)
        elif isinstance(target, ast.Subscript):
            container = self.eval(target.value, frame)
            index = self.eval(target.index, frame)
            container[index] = value
            if isinstance(index, slice):
                self.context.check_size(len(container))
        else:
            self._unsupported(target, frame)

    def _unpack(self, targets: list[ast.Expression], value: Any, frame: _Frame) -> None:
        items = self.context.materialize(self._iterate(value))
        starred = [i for i, t in enumerate(targets) if isinstance(t, ast.Starred)]
        if not starred:
            if len(items) != len(targets):
                raise ExecutionFault(
                    'value-error',
                    f'cannot unpack {len(items)} value(s) into {len(targets)} target(s)',
                )
            for target, item in zip(targets, items):
                self.assign(target, item, frame)
            return
        star = starred[0]
        after = len(targets) - star - 1
        if len(items) < len(targets) - 1:
            raise ExecutionFault(
                'value-error', f'not enough values to unpack (expected at least {len(targets) - 1})'
            )
        for target, item in zip(targets[:star], items[:star]):
            self.assign(target, item, frame)
        self.assign(targets[star].value, items[star : len(items) - after], frame)  # type: ignore
        for target, item in zip(targets[star + 1 :], items[len(items) - after :]):
            self.assign(target, item, frame)

    # ==== expressions ====

    def eval(self, node: ast.Expression, frame: _Frame) -> Any:
        return self._get_evaluator(type(node))(node, frame)

    def _iterate(self, value: Any) -> Iterator[Any]:
        try:
            return iter(value)
        except TypeError:
            raise ExecutionFault(
                'type-mismatch', f'{type_name(value)} object is not iterable'
            ) from None

    def _eval_name(self, node: ast.Name, frame: _Frame) -> Any:
        return frame.lookup(node.id)

    def _eval_constant(self, node: ast.Constant, frame: _Frame) -> Any:
        return node.value

    def _elements(self, elts: list[ast.Expression], frame: _Frame) -> list[Any]:
        out: list[Any] = []
        for elt in elts:
            if isinstance(elt, ast.Starred):
                out.extend(self.context.materialize(self._iterate(self.eval(elt.value, frame))))
            else:
                out.append(self.eval(elt, frame))
        self.context.check_size(len(out))
        return out

    def _eval_tuple(self, node: ast.TupleDisplay, frame: _Frame) -> tuple[Any, ...]:
        return tuple(self._elements(node.elts, frame))

    def _eval_list(self, node: ast.ListDisplay, frame: _Frame) -> list[Any]:
        return self._elements(node.elts, frame)

    def _eval_set(self, node: ast.SetDisplay, frame: _Frame) -> InsertionSet:
        return InsertionSet(self._elements(node.elts, frame))

    def _eval_dict(self, node: ast.DictDisplay, frame: _Frame) -> dict[Any, Any]:
        out: dict[Any, Any] = {}
        for item in node.items:
            if isinstance(item, ast.KeyValue):
                key = self.eval(item.key, frame)
                out[key] = self.eval(item.value, frame)
            else:
                out.update(self.eval(item.value, frame))  # type: ignore
        self.context.check_size(len(out))
        return out

    def _generate(self, node: ast._Comprehension, frame: _Frame) -> Iterator[_Frame]:
        """Yields a comprehension frame for each combination of clauses that passes.

        The first iterable is evaluated in the enclosing scope as soon as this is called.
        """
        names = frozenset(
            name
            for clause in node.clauses
            if isinstance(clause, ast.CompFor)
            for name in target_names(clause.target)
        )
        scope = _Frame({}, names, parent=frame)
        first: ast.CompFor = node.clauses[0]  # type: ignore
        outermost = self._iterate(self.eval(first.iter, frame))

        def loop(i: int) -> Iterator[_Frame]:
            if i == len(node.clauses):
                yield scope
                return
            clause = node.clauses[i]
            if isinstance(clause, ast.CompIf):
                if self.eval(clause.test, scope):
                    yield from loop(i + 1)
                return
            items = outermost if i == 0 else self._iterate(self.eval(clause.iter, scope))
            for item in items:
                self.context.count_step()
                self.assign(clause.target, item, scope)
                yield from loop(i + 1)

        return loop(0)

    def _eval_listcomp(self, node: ast.ListComp, frame: _Frame) -> list[Any]:
        out = []
        for scope in self._generate(node, frame):
            out.append(self.eval(node.elt, scope))
            self.context.check_size(len(out))
        return out

    def _eval_setcomp(self, node: ast.SetComp, frame: _Frame) -> InsertionSet:
        out = InsertionSet()
        for scope in self._generate(node, frame):
            out.add(self.eval(node.elt, scope))
            self.context.check_size(len(out))
        return out

    def _eval_dictcomp(self, node: ast.DictComp, frame: _Frame) -> dict[Any, Any]:
        out: dict[Any, Any] = {}
        pair: ast.KeyValue = node.elt  # type: ignore
        for scope in self._generate(node, frame):
            key = self.eval(pair.key, scope)
            out[key] = self.eval(pair.value, scope)
            self.context.check_size(len(out))
        return out

    def _eval_generatorexp(self, node: ast.GeneratorExp, frame: _Frame) -> Iterator[Any]:
        return (self.eval(node.elt, scope) for scope in self._generate(node, frame))

    def _binary(self, op: str, left: Any, right: Any, *, augmented: bool = False) -> Any:
        if op not in BINARY_OPS:
            raise ExecutionFault('unsupported-construct', f'operator {op!r} is not supported')
        if op == '*':
            self._check_repeat(left, right)
        return apply_binary(op, left, right, augmented=augmented)

    def _check_repeat(self, left: Any, right: Any) -> None:
        for seq, count in ((left, right), (right, left)):
            if isinstance(seq, (list, tuple, str)) and isinstance(count, int):
                self.context.check_size(len(seq) * max(count, 0))

    def _eval_binop(self, node: ast.BinOp, frame: _Frame) -> Any:
        left = self.eval(node.left, frame)
        right = self.eval(node.right, frame)
        result = self._binary(str(node.op), left, right)
        if isinstance(result, (list, tuple, str)):
            self.context.check_size(len(result))
        return result

    def _eval_unaryop(self, node: ast.UnaryOp, frame: _Frame) -> Any:
        return UNARY_OPS[str(node.op)](self.eval(node.operand, frame))

    def _eval_boolop(self, node: ast.BoolOp, frame: _Frame) -> Any:
        value: Any = None
        for operand in node.values:
            value = self.eval(operand, frame)
            if (node.op == 'and') != bool(value):
                return value
        return value

    def _eval_compare(self, node: ast.Compare, frame: _Frame) -> bool:
        left = self.eval(node.left, frame)
        for op, comparator in zip(node.ops, node.comparators):
            right = self.eval(comparator, frame)
            if not COMPARE_OPS[str(op)](left, right):
                return False
            left = right
        return True

    def _eval_ifexp(self, node: ast.IfExp, frame: _Frame) -> Any:
        if self.eval(node.test, frame):
            return self.eval(node.body, frame)
        return self.eval(node.orelse, frame)

    def _arguments(self, node: ast.Call, frame: _Frame) -> tuple[list[Any], dict[str, Any]]:
        args: list[Any] = []
        kwargs: dict[str, Any] = {}
        for arg in node.args:
            if isinstance(arg, ast.DoubleStarred):
                kwargs.update(self.eval(arg.value, frame))
            elif isinstance(arg, ast.Starred):
                args.extend(self.context.materialize(self._iterate(self.eval(arg.value, frame))))
            else:
                args.append(self.eval(arg, frame))
        for keyword in node.keywords:
            kwargs[keyword.arg] = self.eval(keyword.value, frame)
        return args, kwargs

    def _eval_call(self, node: ast.Call, frame: _Frame) -> Any:
        func = node.func
        if isinstance(func, ast.Attribute):
            receiver = self.eval(func.value, frame)
            args, kwargs = self._arguments(node, frame)
            if isinstance(receiver, Module):
                return self._invoke(self._module_function(receiver, func.attr), args, kwargs)
            if 'key' in kwargs:
                kwargs['key'] = self._as_callable(kwargs['key'])
            return call_method(self.context, receiver, func.attr, args, kwargs)
        callee = self.eval(func, frame)
        args, kwargs = self._arguments(node, frame)
        return self._invoke(callee, args, kwargs)

    def _module_function(self, module: Module, name: str) -> Builtin:
        try:
            return module.functions[name]
        except KeyError:
            raise ExecutionFault(
                'type-mismatch', f'module {module.name!r} has no function {name!r}'
            ) from None

    def _eval_subscript(self, node: ast.Subscript, frame: _Frame) -> Any:
        value = self.eval(node.value, frame)
        return value[self.eval(node.index, frame)]

    def _eval_slice(self, node: ast.Slice, frame: _Frame) -> slice:
        bounds = (node.lower, node.upper, node.step)
        parts = (None if p is None else self.eval(p, frame) for p in bounds)
        return slice(*parts)

    def _eval_attribute(self, node: ast.Attribute, frame: _Frame) -> Any:
        value = self.eval(node.value, frame)
        if isinstance(value, Module):
            return self._module_function(value, node.attr)
        raise ExecutionFault(
            'type-mismatch', f'attribute access on {type_name(value)} is not supported'
        )


def _check_return(value: Any) -> tuple[Any, dict[str, Any]]:
    if not (isinstance(value, tuple) and len(value) == 2):
        raise ExecutionFault(
            'malformed-return', f'expected an (output, stats) pair, got {type_name(value)}'
        )
    output, stats = value
    if not isinstance(stats, dict) or not all(isinstance(k, str) for k in stats):
        raise ExecutionFault('malformed-return', 'the second element must map names to values')
    return output, dict(stats)


class Interpreter:
    """Runs validated functions on test inputs.

    Executions share nothing, so one interpreter may serve several threads.

    Attributes
    ----------
    limits: :class:`Limits`
        The default budgets
    """

    def __init__(self, limits: Limits | None = None) -> None:
        self.limits = limits or Limits()

    @staticmethod
    def _ensure_headroom(limits: Limits) -> None:
        needed = limits.max_recursion * _FRAMES_PER_CALL + 2000
        if sys.getrecursionlimit() < needed:
            sys.setrecursionlimit(needed)

    def execute(
        self,
        tree: ast.SyntaxTree,
        args: Sequence[Any],
        limits: Limits | None = None,
        *,
        validate: bool = True,
        expect_pair: bool = True,
    ) -> ExecutionResult:
        """Executes the function on one input.

        Parameters
        ----------
        tree: :class:`~stepwise.SyntaxTree`
            The function
        args: Sequence[Any]
            Positional arguments; copied before the call so callers' values are untouched
        limits: Optional[:class:`Limits`]
            Budgets for this execution, defaulting to the interpreter's
        validate: :class:`bool`
            Whether to check the subset first
        expect_pair: :class:`bool`
            Whether the function must return an ``(output, stats)`` pair. When unset,
            whatever it returns is the output and the stats are empty.

        Returns
        -------
        :class:`ExecutionResult`
            The result. Runtime errors and exhausted budgets are reported in its status.

        Raises
        ------
        :class:`~stepwise.SubsetError`
            ``validate`` is set and the tree uses unsupported constructs.
        """
        if validate:
            require_subset(tree)
        limits = limits or self.limits
        self._ensure_headroom(limits)
        context = ExecutionContext(limits)
        machine = _Machine(context)
        fn = tree.root
        try:
            if len(args) != len(fn.params):
                raise ExecutionFault(
                    'arity-mismatch',
                    f'{fn.name}() takes {len(fn.params)} argument(s) but {len(args)} were given',
                    fn.span,
                )
            module = _Frame({})
            closure = Closure(fn, module, machine)
            module.vars[fn.name] = closure
            value = machine.call_closure(closure, [to_runtime(a) for a in args], {})
            output, stats = _check_return(value) if expect_pair else (value, {})
        except ExecutionFault as fault:
            log.debug('%s raised %s', fn.name, fault)
            return ExecutionResult(
                Status.RUNTIME_ERROR,
                steps=context.steps,
                error_kind=fault.kind,
                message=fault.message,
                span=fault.span,
            )
        except (LimitExceeded, RecursionError) as exc:
            which = exc.which if isinstance(exc, LimitExceeded) else 'max_recursion'
            log.debug('%s exceeded %s after %d steps', fn.name, which, context.steps)
            return ExecutionResult(
                Status.LIMIT_EXCEEDED,
                steps=context.steps,
                error_kind=which,
                message=f'{which} exhausted',
            )
        return ExecutionResult(Status.OK, output, stats, context.steps)

    def run_suite(
        self,
        tree: ast.SyntaxTree,
        tests: Iterable[TestCase | Sequence[Any]],
        limits: Limits | None = None,
        *,
        jobs: int = 1,
    ) -> list[ExecutionResult]:
        """Executes the function on every test, in order.

        A failing test never stops the others. With ``jobs > 1`` tests run on a
        thread pool; results still come back in input order. Interpretation is
        pure Python and holds the GIL, so this overlaps but does not speed up
        the tests.

        Raises
        ------
        :class:`~stepwise.SubsetError`
            The tree uses unsupported constructs.
        """
        require_subset(tree)
        inputs = [getattr(test, 'args', test) for test in tests]

        def run(args: Sequence[Any]) -> ExecutionResult:
            return self.execute(tree, args, limits, validate=False)

        if jobs <= 1 or len(inputs) <= 1:
            return [run(args) for args in inputs]
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(run, inputs))
