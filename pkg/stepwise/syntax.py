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

import abc
import ast
import functools
import pathlib
from typing import TYPE_CHECKING, Any, ClassVar, NamedTuple

from lark.exceptions import (
    UnexpectedCharacters,
    UnexpectedEOF,
    UnexpectedInput,
    UnexpectedToken,
    VisitError,
)
from lark.indenter import DedentError, Indenter
from lark.lark import Lark
from lark.lexer import Token
from lark.tree import Meta
from lark.visitors import Transformer, v_args

from .errors import DefinitionCountError, SourceSyntaxError, StepwiseError


if TYPE_CHECKING:
    from collections.abc import Iterator

    from typing_extensions import Self


__all__ = (
    'Span',
    'ChildMixin',
    'Node',
    'Statement',
    'Expression',
    'FunctionDef',
    'Param',
    'ClassDef',
    'Return',
    'Assign',
    'AugAssign',
    'AnnAssign',
    'ExprStmt',
    'Pass',
    'Break',
    'Continue',
    'Global',
    'Nonlocal',
    'Import',
    'FromImport',
    'Raise',
    'Delete',
    'Assert',
    'YieldStmt',
    'If',
    'Elif',
    'While',
    'For',
    'Try',
    'ExceptHandler',
    'With',
    'WithItem',
    'Name',
    'Constant',
    'Unsupported',
    'TupleDisplay',
    'ListDisplay',
    'SetDisplay',
    'DictDisplay',
    'KeyValue',
    'ListComp',
    'SetComp',
    'DictComp',
    'GeneratorExp',
    'CompFor',
    'CompIf',
    'BinOp',
    'UnaryOp',
    'BoolOp',
    'Compare',
    'IfExp',
    'Call',
    'Keyword',
    'Subscript',
    'Slice',
    'Attribute',
    'Lambda',
    'NamedExpr',
    'Starred',
    'DoubleStarred',
    'SyntaxTree',
    'parse',
    'parse_expression',
)


class Span(NamedTuple):
    """A source region. Lines and columns are 1-based, the end is exclusive."""

    line: int
    column: int
    end_line: int
    end_column: int

    def contains(self, other: Span) -> bool:
        return (self.line, self.column) <= (other.line, other.column) and (
            other.end_line,
            other.end_column,
        ) <= (self.end_line, self.end_column)

    @classmethod
    def from_meta(cls, meta: Meta) -> Span:
        if meta.empty:
            return NO_SPAN
        return cls(meta.line, meta.column, meta.end_line, meta.end_column)

    @classmethod
    def from_token(cls, token: Token) -> Span:
        return cls(token.line or 0, token.column or 0, token.end_line or 0, token.end_column or 0)

    @classmethod
    def between(cls, first: Span, last: Span) -> Span:
        return cls(first.line, first.column, last.end_line, last.end_column)


NO_SPAN = Span(0, 0, 0, 0)


# Operator binding strength, loosest first. Used to decide where the pretty
# printer needs parentheses.
PREC_LAMBDA = 0
PREC_IFEXP = 1
PREC_OR = 2
PREC_AND = 3
PREC_NOT = 4
PREC_COMPARE = 5
PREC_BOR = 6
PREC_UNARY = 12
PREC_POWER = 13
PREC_ATOM = 14

BINARY_PRECEDENCE = {
    '|': PREC_BOR,
    '^': 7,
    '&': 8,
    '<<': 9,
    '>>': 9,
    '+': 10,
    '-': 10,
    '*': 11,
    '@': 11,
    '/': 11,
    '//': 11,
    '%': 11,
    '**': PREC_POWER,
}


class ChildMixin:
    """A mixin that tree nodes must implement to support tree traversal utilities."""

    @property
    def children(self) -> list[Self]:
        """A list of this node's children."""
        raise NotImplementedError


class Node(abc.ABC, ChildMixin):
    """The base class for all syntax tree nodes.

    Subclasses list their child-bearing attributes in ``_fields`` (in source order)
    and their plain attributes in ``_attrs``. A child-bearing attribute holds a
    node, ``None``, or a list of nodes.

    Attributes
    ----------
    span: :class:`Span`
        Where the node appears in the source.
    """

    __slots__ = ('span',)

    _fields: ClassVar[tuple[str, ...]] = ()
    _attrs: ClassVar[tuple[str, ...]] = ()

    def __init__(self, span: Span = NO_SPAN) -> None:
        self.span = span

    @property
    def children(self) -> list[Node]:
        out: list[Node] = []
        for field in self._fields:
            value = getattr(self, field)
            if value is None:
                continue
            if isinstance(value, list):
                out.extend(value)
            else:
                out.append(value)
        return out

    def dump(self) -> tuple[Any, ...]:
        """A nested tuple describing the node without its spans.

        Two trees are structurally equal when their dumps are equal.
        """

        def _dump(value: Any) -> Any:
            if isinstance(value, Node):
                return value.dump()
            if isinstance(value, list):
                return tuple(_dump(v) for v in value)
            return value

        return (
            type(self).__name__,
            tuple(_dump(getattr(self, a)) for a in self._attrs),
            tuple(_dump(getattr(self, f)) for f in self._fields),
        )

    def __repr__(self) -> str:
        return f'<{type(self).__name__} {str(self)!r} at {self.span.line}:{self.span.column}>'


# ==== expressions ====


class Expression(Node):
    __slots__ = ()

    @property
    def precedence(self) -> int:
        return PREC_ATOM


def _wrap(node: Node, minimum: int) -> str:
    if isinstance(node, Expression) and node.precedence < minimum:
        return f'({node})'
    return str(node)


def _bare(node: Node) -> str:
    """Renders a tuple without its parentheses, as in ``return a, b``."""
    if isinstance(node, TupleDisplay) and node.elts:
        return node.inner()
    return _wrap(node, PREC_IFEXP)


class Name(Expression):
    """
    Attributes
    ----------
    id: :class:`str`
        The identifier
    """

    __slots__ = ('id',)
    _attrs = ('id',)

    def __init__(self, id: str, *, span: Span = NO_SPAN) -> None:
        super().__init__(span)
        self.id = str(id)

    def __str__(self) -> str:
        return self.id


class Constant(Expression):
    """
    Attributes
    ----------
    value: Union[:class:`int`, :class:`float`, :class:`str`, :class:`bool`, None]
        The literal value
    """

    __slots__ = ('value',)
    _attrs = ('value',)

    def __init__(self, value: int | float | str | bool | None, *, span: Span = NO_SPAN) -> None:
        super().__init__(span)
        self.value = value

    @property
    def precedence(self) -> int:
        value = self.value
        if isinstance(value, (int, float)) and not isinstance(value, bool) and value < 0:
            return PREC_UNARY
        return PREC_ATOM

    def __str__(self) -> str:
        return repr(self.value)


class Unsupported(Expression):
    """A literal the language does not support (f-strings, bytes).

    Attributes
    ----------
    construct: :class:`str`
        The catalogue name of the construct
    text: :class:`str`
        The original source text
    """

    __slots__ = ('construct', 'text')
    _attrs = ('construct', 'text')

    def __init__(self, construct: str, text: str, *, span: Span = NO_SPAN) -> None:
        super().__init__(span)
        self.construct = construct
        self.text = text

    def __str__(self) -> str:
        return self.text


class _Sequence(Expression):
    __slots__ = ('elts',)
    _fields = ('elts',)

    def __init__(self, elts: list[Expression], *, span: Span = NO_SPAN) -> None:
        super().__init__(span)
        self.elts = list(elts)

    def inner(self) -> str:
        return ', '.join(_wrap(e, PREC_IFEXP) for e in self.elts)


class TupleDisplay(_Sequence):
    __slots__ = ()

    def inner(self) -> str:
        if len(self.elts) == 1:
            return f'{_wrap(self.elts[0], PREC_IFEXP)},'
        return super().inner()

    def __str__(self) -> str:
        return f'({self.inner()})'


class ListDisplay(_Sequence):
    __slots__ = ()

    def __str__(self) -> str:
        return f'[{self.inner()}]'


class SetDisplay(_Sequence):
    __slots__ = ()

    def __str__(self) -> str:
        return f'{{{self.inner()}}}'


class KeyValue(Expression):
    __slots__ = ('key', 'value')
    _fields = ('key', 'value')

    def __init__(self, key: Expression, value: Expression, *, span: Span = NO_SPAN) -> None:
        super().__init__(span)
        self.key = key
        self.value = value

    def __str__(self) -> str:
        return f'{_wrap(self.key, PREC_IFEXP)}: {_wrap(self.value, PREC_IFEXP)}'


class DictDisplay(Expression):
    """
    Attributes
    ----------
    items: List[Union[:class:`KeyValue`, :class:`DoubleStarred`]]
        The entries, in source order
    """

    __slots__ = ('items',)
    _fields = ('items',)

    def __init__(self, items: list[Expression], *, span: Span = NO_SPAN) -> None:
        super().__init__(span)
        self.items = list(items)

    def __str__(self) -> str:
        return '{' + ', '.join(str(i) for i in self.items) + '}'


class CompFor(Node):
    __slots__ = ('target', 'iter')
    _fields = ('target', 'iter')

    def __init__(self, target: Expression, iter: Expression, *, span: Span = NO_SPAN) -> None:
        super().__init__(span)
        self.target = target
        self.iter = iter

    def __str__(self) -> str:
        return f'for {_bare(self.target)} in {_wrap(self.iter, PREC_OR)}'


class CompIf(Node):
    __slots__ = ('test',)
    _fields = ('test',)

    def __init__(self, test: Expression, *, span: Span = NO_SPAN) -> None:
        super().__init__(span)
        self.test = test

    def __str__(self) -> str:
        return f'if {_wrap(self.test, PREC_OR)}'


class _Comprehension(Expression):
    """
    Attributes
    ----------
    elt: :class:`Expression`
        The produced element (a :class:`KeyValue` for dict comprehensions)
    clauses: List[Union[:class:`CompFor`, :class:`CompIf`]]
        The ``for`` and ``if`` clauses in source order; the first is always a ``for``
    """

    __slots__ = ('elt', 'clauses')
    _fields = ('elt', 'clauses')
    _brackets: ClassVar[str] = '[]'

    def __init__(
        self, elt: Expression, clauses: list[CompFor | CompIf], *, span: Span = NO_SPAN
    ) -> None:
        super().__init__(span)
        self.elt = elt
        self.clauses = list(clauses)

    def __str__(self) -> str:
        elt = str(self.elt) if isinstance(self.elt, KeyValue) else _wrap(self.elt, PREC_IFEXP)
        clauses = ' '.join(str(c) for c in self.clauses)
        return f'{self._brackets[0]}{elt} {clauses}{self._brackets[1]}'


class ListComp(_Comprehension):
    __slots__ = ()


class SetComp(_Comprehension):
    __slots__ = ()
    _brackets = '{}'


class DictComp(_Comprehension):
    __slots__ = ()
    _brackets = '{}'


class GeneratorExp(_Comprehension):
    __slots__ = ()
    _brackets = '()'


class BinOp(Expression):
    """
    Attributes
    ----------
    op: :class:`str`
        The binary operation, e.g. ``//``
    left: :class:`Expression`
        The left operand
    right: :class:`Expression`
        The right operand
    """

    __slots__ = ('op', 'left', 'right')
    _attrs = ('op',)
    _fields = ('left', 'right')

    if TYPE_CHECKING:
        left: Expression
        right: Expression

    def __init__(
        self, left: Expression, op: Token | str, right: Expression, *, span: Span = NO_SPAN
    ) -> None:
        super().__init__(span)
        self.op = str(op)
        self.left = left
        self.right = right

    @property
    def precedence(self) -> int:
        return BINARY_PRECEDENCE[self.op]

    def __str__(self) -> str:
        prec = self.precedence
        if self.op == '**':
            return f'{_wrap(self.left, prec + 1)} ** {_wrap(self.right, PREC_UNARY)}'
        return f'{_wrap(self.left, prec)} {self.op} {_wrap(self.right, prec + 1)}'


class UnaryOp(Expression):
    """
    Attributes
    ----------
    op: :class:`str`
        One of ``-``, ``+``, ``~`` or ``not``
    operand: :class:`Expression`
        The subtree that the operation operates on
    """

    __slots__ = ('op', 'operand')
    _attrs = ('op',)
    _fields = ('operand',)

    def __init__(self, op: Token | str, operand: Expression, *, span: Span = NO_SPAN) -> None:
        super().__init__(span)
        self.op = str(op)
        self.operand = operand

    @property
    def precedence(self) -> int:
        return PREC_NOT if self.op == 'not' else PREC_UNARY

    def __str__(self) -> str:
        if self.op == 'not':
            return f'not {_wrap(self.operand, PREC_NOT)}'
        return f'{self.op}{_wrap(self.operand, PREC_UNARY)}'


class BoolOp(Expression):
    __slots__ = ('op', 'values')
    _attrs = ('op',)
    _fields = ('values',)

    def __init__(self, op: str, values: list[Expression], *, span: Span = NO_SPAN) -> None:
        super().__init__(span)
        self.op = op
        self.values = list(values)

    @property
    def precedence(self) -> int:
        return PREC_OR if self.op == 'or' else PREC_AND

    def __str__(self) -> str:
        return f' {self.op} '.join(_wrap(v, self.precedence + 1) for v in self.values)


class Compare(Expression):
    """
    Attributes
    ----------
    left: :class:`Expression`
        The first operand
    ops: List[:class:`str`]
        The comparison operators, e.g. ``<`` or ``not in``
    comparators: List[:class:`Expression`]
        The operands after each operator
    """

    __slots__ = ('left', 'ops', 'comparators')
    _attrs = ('ops',)
    _fields = ('left', 'comparators')

    if TYPE_CHECKING:
        left: Expression

    def __init__(
        self,
        left: Expression,
        ops: list[str],
        comparators: list[Expression],
        *,
        span: Span = NO_SPAN,
    ) -> None:
        super().__init__(span)
        self.left = left
        self.ops = list(ops)
        self.comparators = list(comparators)

    @property
    def precedence(self) -> int:
        return PREC_COMPARE

    def __str__(self) -> str:
        parts = [_wrap(self.left, PREC_COMPARE + 1)]
        for op, comparator in zip(self.ops, self.comparators):
            parts.append(op)
            parts.append(_wrap(comparator, PREC_COMPARE + 1))
        return ' '.join(parts)


class IfExp(Expression):
    __slots__ = ('body', 'test', 'orelse')
    _fields = ('body', 'test', 'orelse')

    def __init__(
        self, body: Expression, test: Expression, orelse: Expression, *, span: Span = NO_SPAN
    ) -> None:
        super().__init__(span)
        self.body = body
        self.test = test
        self.orelse = orelse

    @property
    def precedence(self) -> int:
        return PREC_IFEXP

    def __str__(self) -> str:
        body = _wrap(self.body, PREC_OR)
        test = _wrap(self.test, PREC_OR)
        return f'{body} if {test} else {_wrap(self.orelse, PREC_IFEXP)}'


class Keyword(Node):
    __slots__ = ('arg', 'value')
    _attrs = ('arg',)
    _fields = ('value',)

    def __init__(self, arg: str, value: Expression, *, span: Span = NO_SPAN) -> None:
        super().__init__(span)
        self.arg = str(arg)
        self.value = value

    def __str__(self) -> str:
        return f'{self.arg}={_wrap(self.value, PREC_LAMBDA)}'


class Call(Expression):
    """
    Attributes
    ----------
    func: :class:`Expression`
        The callee
    args: List[:class:`Expression`]
        Positional arguments
    keywords: List[:class:`Keyword`]
        Keyword arguments
    """

    __slots__ = ('func', 'args', 'keywords')
    _fields = ('func', 'args', 'keywords')

    def __init__(
        self,
        func: Expression,
        args: list[Expression],
        keywords: list[Keyword] | None = None,
        *,
        span: Span = NO_SPAN,
    ) -> None:
        super().__init__(span)
        self.func = func
        self.args = list(args)
        self.keywords = list(keywords or ())

    @property
    def func_name(self) -> str | None:
        """The callee's name when it is a plain name."""
        return self.func.id if isinstance(self.func, Name) else None

    def __str__(self) -> str:
        args = [_wrap(a, PREC_LAMBDA) for a in self.args] + [str(k) for k in self.keywords]
        return f'{_wrap(self.func, PREC_ATOM)}({", ".join(args)})'


class Slice(Expression):
    __slots__ = ('lower', 'upper', 'step')
    _fields = ('lower', 'upper', 'step')

    def __init__(
        self,
        lower: Expression | None,
        upper: Expression | None,
        step: Expression | None,
        *,
        span: Span = NO_SPAN,
    ) -> None:
        super().__init__(span)
        self.lower = lower
        self.upper = upper
        self.step = step

    def __str__(self) -> str:
        def part(n: Expression | None) -> str:
            return '' if n is None else _wrap(n, PREC_IFEXP)

        out = f'{part(self.lower)}:{part(self.upper)}'
        if self.step is not None:
            out += f':{part(self.step)}'
        return out


class Subscript(Expression):
    __slots__ = ('value', 'index')
    _fields = ('value', 'index')

    def __init__(self, value: Expression, index: Expression, *, span: Span = NO_SPAN) -> None:
        super().__init__(span)
        self.value = value
        self.index = index

    def __str__(self) -> str:
        if isinstance(self.index, TupleDisplay) and self.index.elts:
            index = self.index.inner()
        else:
            index = str(self.index)
        return f'{_wrap(self.value, PREC_ATOM)}[{index}]'


class Attribute(Expression):
    __slots__ = ('value', 'attr')
    _attrs = ('attr',)
    _fields = ('value',)

    def __init__(self, value: Expression, attr: str, *, span: Span = NO_SPAN) -> None:
        super().__init__(span)
        self.value = value
        self.attr = str(attr)

    def __str__(self) -> str:
        return f'{_wrap(self.value, PREC_ATOM)}.{self.attr}'


class Lambda(Expression):
    __slots__ = ('params', 'body')
    _attrs = ('params',)
    _fields = ('body',)

    def __init__(self, params: list[str], body: Expression, *, span: Span = NO_SPAN) -> None:
        super().__init__(span)
        self.params = [str(p) for p in params]
        self.body = body

    @property
    def precedence(self) -> int:
        return PREC_LAMBDA

    def __str__(self) -> str:
        params = ', '.join(self.params)
        head = f'lambda {params}' if params else 'lambda'
        return f'{head}: {_wrap(self.body, PREC_LAMBDA)}'


class NamedExpr(Expression):
    __slots__ = ('target', 'value')
    _attrs = ('target',)
    _fields = ('value',)

    def __init__(self, target: str, value: Expression, *, span: Span = NO_SPAN) -> None:
        super().__init__(span)
        self.target = str(target)
        self.value = value

    def __str__(self) -> str:
        return f'({self.target} := {_wrap(self.value, PREC_IFEXP)})'


class Starred(Expression):
    __slots__ = ('value',)
    _fields = ('value',)

    def __init__(self, value: Expression, *, span: Span = NO_SPAN) -> None:
        super().__init__(span)
        self.value = value

    def __str__(self) -> str:
        return f'*{_wrap(self.value, PREC_BOR)}'


class DoubleStarred(Starred):
    __slots__ = ()

    def __str__(self) -> str:
        return f'**{_wrap(self.value, PREC_BOR)}'




# ==== statements ====

INDENT = '    '


def _indent(lines: list[str]) -> list[str]:
    return [INDENT + line for line in lines]


def _block(header: str, body: list[Statement]) -> list[str]:
    lines = [header]
    for stmt in body:
        lines.extend(_indent(stmt.lines()))
    return lines


class Statement(Node):
    __slots__ = ()

    def lines(self) -> list[str]:
        """The statement's source lines, unindented."""
        return [self.render()]

    def render(self) -> str:
        raise NotImplementedError

    def __str__(self) -> str:
        return '\n'.join(self.lines())


class Param(Node):
    """
    Attributes
    ----------
    name: :class:`str`
        The parameter name
    kind: :class:`str`
        ``plain``, ``annotated``, ``default``, ``star`` or ``kwargs``
    annotation: Optional[:class:`Expression`]
        The annotation, if any
    default: Optional[:class:`Expression`]
        The default value, if any
    """

    __slots__ = ('name', 'kind', 'annotation', 'default')
    _attrs = ('name', 'kind')
    _fields = ('annotation', 'default')

    def __init__(
        self,
        name: str,
        kind: str = 'plain',
        annotation: Expression | None = None,
        default: Expression | None = None,
        *,
        span: Span = NO_SPAN,
    ) -> None:
        super().__init__(span)
        self.name = str(name)
        self.kind = kind
        self.annotation = annotation
        self.default = default

    def __str__(self) -> str:
        if self.kind == 'star':
            return f'*{self.name}'
        if self.kind == 'kwargs':
            return f'**{self.name}'
        out = self.name
        if self.annotation is not None:
            out += f': {_wrap(self.annotation, PREC_IFEXP)}'
            if self.default is not None:
                out += f' = {_wrap(self.default, PREC_IFEXP)}'
        elif self.default is not None:
            out += f'={_wrap(self.default, PREC_IFEXP)}'
        return out


class FunctionDef(Statement):
    """
    Attributes
    ----------
    name: :class:`str`
        The function name
    decorators: List[:class:`Expression`]
        Decorator expressions, outermost first
    params: List[:class:`Param`]
        The parameters in order
    returns: Optional[:class:`Expression`]
        The return annotation, if any
    body: List[:class:`Statement`]
        The function body
    """

    __slots__ = ('name', 'decorators', 'params', 'returns', 'body')
    _attrs = ('name',)
    _fields = ('decorators', 'params', 'returns', 'body')

    def __init__(
        self,
        name: str,
        params: list[Param],
        body: list[Statement],
        returns: Expression | None = None,
        decorators: list[Expression] | None = None,
        *,
        span: Span = NO_SPAN,
    ) -> None:
        super().__init__(span)
        self.name = str(name)
        self.params = list(params)
        self.body = list(body)
        self.returns = returns
        self.decorators = list(decorators or ())

    @property
    def param_names(self) -> list[str]:
        return [p.name for p in self.params]

    def lines(self) -> list[str]:
        head = [f'@{d}' for d in self.decorators]
        returns = f' -> {self.returns}' if self.returns is not None else ''
        params = ', '.join(str(p) for p in self.params)
        return head + _block(f'def {self.name}({params}){returns}:', self.body)


class ClassDef(Statement):
    __slots__ = ('name', 'bases', 'body')
    _attrs = ('name',)
    _fields = ('bases', 'body')

    def __init__(
        self, name: str, bases: list[Expression], body: list[Statement], *, span: Span = NO_SPAN
    ) -> None:
        super().__init__(span)
        self.name = str(name)
        self.bases = list(bases)
        self.body = list(body)

    def lines(self) -> list[str]:
        bases = f'({", ".join(str(b) for b in self.bases)})' if self.bases else ''
        return _block(f'class {self.name}{bases}:', self.body)


class Return(Statement):
    __slots__ = ('value',)
    _fields = ('value',)

    def __init__(self, value: Expression | None, *, span: Span = NO_SPAN) -> None:
        super().__init__(span)
        self.value = value

    def render(self) -> str:
        return 'return' if self.value is None else f'return {_bare(self.value)}'


class Assign(Statement):
    """``a = b = value``; chained targets are listed left to right."""

    __slots__ = ('targets', 'value')
    _fields = ('targets', 'value')

    def __init__(
        self, targets: list[Expression], value: Expression, *, span: Span = NO_SPAN
    ) -> None:
        super().__init__(span)
        self.targets = list(targets)
        self.value = value

    def render(self) -> str:
        return ' = '.join(_bare(n) for n in [*self.targets, self.value])


class AugAssign(Statement):
    """
    Attributes
    ----------
    op: :class:`str`
        The binary operator, without the trailing ``=``
    """

    __slots__ = ('target', 'op', 'value')
    _attrs = ('op',)
    _fields = ('target', 'value')

    def __init__(
        self, target: Expression, op: str, value: Expression, *, span: Span = NO_SPAN
    ) -> None:
        super().__init__(span)
        self.target = target
        self.op = op
        self.value = value

    def render(self) -> str:
        return f'{_bare(self.target)} {self.op}= {_bare(self.value)}'


class AnnAssign(Statement):
    __slots__ = ('target', 'annotation', 'value')
    _fields = ('target', 'annotation', 'value')

    def __init__(
        self,
        target: Expression,
        annotation: Expression,
        value: Expression | None,
        *,
        span: Span = NO_SPAN,
    ) -> None:
        super().__init__(span)
        self.target = target
        self.annotation = annotation
        self.value = value

    def render(self) -> str:
        out = f'{self.target}: {self.annotation}'
        if self.value is not None:
            out += f' = {_bare(self.value)}'
        return out


class ExprStmt(Statement):
    __slots__ = ('value',)
    _fields = ('value',)

    def __init__(self, value: Expression, *, span: Span = NO_SPAN) -> None:
        super().__init__(span)
        self.value = value

    def render(self) -> str:
        return _bare(self.value)


class Pass(Statement):
    __slots__ = ()

    def render(self) -> str:
        return 'pass'


class Break(Statement):
    __slots__ = ()

    def render(self) -> str:
        return 'break'


class Continue(Statement):
    __slots__ = ()

    def render(self) -> str:
        return 'continue'


class Global(Statement):
    __slots__ = ('names',)
    _attrs = ('names',)
    keyword: ClassVar[str] = 'global'

    def __init__(self, names: list[str], *, span: Span = NO_SPAN) -> None:
        super().__init__(span)
        self.names = [str(n) for n in names]

    def render(self) -> str:
        return f'{self.keyword} {", ".join(self.names)}'


class Nonlocal(Global):
    __slots__ = ()
    keyword = 'nonlocal'


class Import(Statement):
    """
    Attributes
    ----------
    names: List[Tuple[:class:`str`, Optional[:class:`str`]]]
        Dotted module names and their aliases
    """

    __slots__ = ('names',)
    _attrs = ('names',)

    def __init__(self, names: list[tuple[str, str | None]], *, span: Span = NO_SPAN) -> None:
        super().__init__(span)
        self.names = list(names)

    def render(self) -> str:
        parts = [m if alias is None else f'{m} as {alias}' for m, alias in self.names]
        return f'import {", ".join(parts)}'


class FromImport(Statement):
    __slots__ = ('module', 'names')
    _attrs = ('module', 'names')

    def __init__(self, module: str, names: list[str], *, span: Span = NO_SPAN) -> None:
        super().__init__(span)
        self.module = module
        self.names = [str(n) for n in names]

    def render(self) -> str:
        return f'from {self.module} import {", ".join(self.names) or "*"}'


class Raise(Statement):
    __slots__ = ('exc', 'cause')
    _fields = ('exc', 'cause')

    def __init__(
        self, exc: Expression | None, cause: Expression | None = None, *, span: Span = NO_SPAN
    ) -> None:
        super().__init__(span)
        self.exc = exc
        self.cause = cause

    def render(self) -> str:
        out = 'raise'
        if self.exc is not None:
            out += f' {self.exc}'
        if self.cause is not None:
            out += f' from {self.cause}'
        return out


class Delete(Statement):
    __slots__ = ('target',)
    _fields = ('target',)

    def __init__(self, target: Expression, *, span: Span = NO_SPAN) -> None:
        super().__init__(span)
        self.target = target

    def render(self) -> str:
        return f'del {_bare(self.target)}'


class Assert(Statement):
    __slots__ = ('test', 'msg')
    _fields = ('test', 'msg')

    def __init__(
        self, test: Expression, msg: Expression | None = None, *, span: Span = NO_SPAN
    ) -> None:
        super().__init__(span)
        self.test = test
        self.msg = msg

    def render(self) -> str:
        if self.msg is None:
            return f'assert {self.test}'
        return f'assert {self.test}, {self.msg}'


class YieldStmt(Statement):
    __slots__ = ('value',)
    _fields = ('value',)

    def __init__(self, value: Expression | None, *, span: Span = NO_SPAN) -> None:
        super().__init__(span)
        self.value = value

    def render(self) -> str:
        return 'yield' if self.value is None else f'yield {_bare(self.value)}'


class Elif(Node):
    __slots__ = ('test', 'body')
    _fields = ('test', 'body')

    def __init__(self, test: Expression, body: list[Statement], *, span: Span = NO_SPAN) -> None:
        super().__init__(span)
        self.test = test
        self.body = list(body)

    def lines(self) -> list[str]:
        return _block(f'elif {_wrap(self.test, PREC_IFEXP)}:', self.body)


class If(Statement):
    """
    Attributes
    ----------
    test: :class:`Expression`
        The condition
    body: List[:class:`Statement`]
        Runs when the condition holds
    elifs: List[:class:`Elif`]
        ``elif`` branches in order
    orelse: List[:class:`Statement`]
        The ``else`` branch, empty when absent
    """

    __slots__ = ('test', 'body', 'elifs', 'orelse')
    _fields = ('test', 'body', 'elifs', 'orelse')

    def __init__(
        self,
        test: Expression,
        body: list[Statement],
        elifs: list[Elif] | None = None,
        orelse: list[Statement] | None = None,
        *,
        span: Span = NO_SPAN,
    ) -> None:
        super().__init__(span)
        self.test = test
        self.body = list(body)
        self.elifs = list(elifs or ())
        self.orelse = list(orelse or ())

    def lines(self) -> list[str]:
        out = _block(f'if {_wrap(self.test, PREC_IFEXP)}:', self.body)
        for clause in self.elifs:
            out.extend(clause.lines())
        if self.orelse:
            out.extend(_block('else:', self.orelse))
        return out


class While(Statement):
    __slots__ = ('test', 'body', 'orelse')
    _fields = ('test', 'body', 'orelse')

    def __init__(
        self,
        test: Expression,
        body: list[Statement],
        orelse: list[Statement] | None = None,
        *,
        span: Span = NO_SPAN,
    ) -> None:
        super().__init__(span)
        self.test = test
        self.body = list(body)
        self.orelse = list(orelse or ())

    def lines(self) -> list[str]:
        out = _block(f'while {_wrap(self.test, PREC_IFEXP)}:', self.body)
        if self.orelse:
            out.extend(_block('else:', self.orelse))
        return out


class For(Statement):
    __slots__ = ('target', 'iter', 'body', 'orelse')
    _fields = ('target', 'iter', 'body', 'orelse')

    def __init__(
        self,
        target: Expression,
        iter: Expression,
        body: list[Statement],
        orelse: list[Statement] | None = None,
        *,
        span: Span = NO_SPAN,
    ) -> None:
        super().__init__(span)
        self.target = target
        self.iter = iter
        self.body = list(body)
        self.orelse = list(orelse or ())

    def lines(self) -> list[str]:
        out = _block(f'for {_bare(self.target)} in {_bare(self.iter)}:', self.body)
        if self.orelse:
            out.extend(_block('else:', self.orelse))
        return out


class ExceptHandler(Node):
    __slots__ = ('type', 'name', 'body')
    _attrs = ('name',)
    _fields = ('type', 'body')

    def __init__(
        self,
        type: Expression | None,
        name: str | None,
        body: list[Statement],
        *,
        span: Span = NO_SPAN,
    ) -> None:
        super().__init__(span)
        self.type = type
        self.name = None if name is None else str(name)
        self.body = list(body)

    def lines(self) -> list[str]:
        head = 'except'
        if self.type is not None:
            head += f' {self.type}'
            if self.name is not None:
                head += f' as {self.name}'
        return _block(head + ':', self.body)


class Try(Statement):
    __slots__ = ('body', 'handlers', 'orelse', 'finalbody')
    _fields = ('body', 'handlers', 'orelse', 'finalbody')

    def __init__(
        self,
        body: list[Statement],
        handlers: list[ExceptHandler],
        orelse: list[Statement] | None = None,
        finalbody: list[Statement] | None = None,
        *,
        span: Span = NO_SPAN,
    ) -> None:
        super().__init__(span)
        self.body = list(body)
        self.handlers = list(handlers)
        self.orelse = list(orelse or ())
        self.finalbody = list(finalbody or ())

    def lines(self) -> list[str]:
        out = _block('try:', self.body)
        for handler in self.handlers:
            out.extend(handler.lines())
        if self.orelse:
            out.extend(_block('else:', self.orelse))
        if self.finalbody:
            out.extend(_block('finally:', self.finalbody))
        return out


class WithItem(Node):
    __slots__ = ('context', 'name')
    _attrs = ('name',)
    _fields = ('context',)

    def __init__(self, context: Expression, name: str | None, *, span: Span = NO_SPAN) -> None:
        super().__init__(span)
        self.context = context
        self.name = None if name is None else str(name)

    def __str__(self) -> str:
        return str(self.context) if self.name is None else f'{self.context} as {self.name}'


class With(Statement):
    __slots__ = ('items', 'body')
    _fields = ('items', 'body')

    def __init__(
        self, items: list[WithItem], body: list[Statement], *, span: Span = NO_SPAN
    ) -> None:
        super().__init__(span)
        self.items = list(items)
        self.body = list(body)

    def lines(self) -> list[str]:
        return _block(f'with {", ".join(str(i) for i in self.items)}:', self.body)


# ==== transformer ====


def _span_to_end(meta: Meta, node: Node) -> Span:
    # Block meta can run onto the line after the block because of the trailing
    # newline and dedent tokens, so blocks end where their last child ends.
    last = node.children[-1].span if node.children else Span.from_meta(meta)
    start = Span.from_meta(meta)
    return Span(start.line, start.column, last.end_line, last.end_column)


def _fold_binary(children: list[Any]) -> Expression:
    node = children[0]
    for i in range(1, len(children), 2):
        right = children[i + 1]
        node = BinOp(node, children[i], right, span=Span.between(node.span, right.span))
    return node


def _fold_implicit(op: str, children: list[Expression]) -> Expression:
    node = children[0]
    for right in children[1:]:
        node = BinOp(node, op, right, span=Span.between(node.span, right.span))
    return node


class _CompParts(NamedTuple):
    elt: Expression
    clauses: list[CompFor | CompIf]


@v_args(meta=True)
class SourceTransformer(Transformer):
    """Turns the parse tree into :class:`Node` objects with spans."""

    # -- top level --

    def file_input(self, meta, stmts) -> list[Statement]:
        return list(stmts)

    def eval_input(self, meta, children) -> Expression:
        return children[0]

    def name(self, meta, children) -> Token:
        return children[0]

    def dotted_name(self, meta, names) -> Name:
        return Name('.'.join(names), span=Span.from_meta(meta))

    def decorator(self, meta, children) -> Expression:
        target, args = children
        if args is None:
            return target
        return self._make_call(meta, target, args)

    def decorated(self, meta, children) -> FunctionDef:
        *decorators, funcdef = children
        funcdef.decorators = decorators
        funcdef.span = Span.between(decorators[0].span, funcdef.span)
        return funcdef

    def funcdef(self, meta, children) -> FunctionDef:
        name, params, returns, body = children
        node = FunctionDef(name, params or [], body, returns)
        node.span = _span_to_end(meta, node)
        return node

    def classdef(self, meta, children) -> ClassDef:
        name, bases, body = children
        node = ClassDef(name, [a for a in bases or () if not isinstance(a, Keyword)], body)
        node.span = _span_to_end(meta, node)
        return node

    def parameters(self, meta, params) -> list[Param]:
        return list(params)

    def plain_param(self, meta, children) -> Param:
        return Param(children[0], 'plain', span=Span.from_meta(meta))

    def annotated_param(self, meta, children) -> Param:
        return Param(children[0], 'annotated', children[1], span=Span.from_meta(meta))

    def default_param(self, meta, children) -> Param:
        name, annotation, default = children
        return Param(name, 'default', annotation, default, span=Span.from_meta(meta))

    def star_param(self, meta, children) -> Param:
        return Param(children[0], 'star', span=Span.from_meta(meta))

    def kwargs_param(self, meta, children) -> Param:
        return Param(children[0], 'kwargs', span=Span.from_meta(meta))

    # -- simple statements --

    def expr_stmt(self, meta, children) -> ExprStmt:
        return ExprStmt(children[0], span=Span.from_meta(meta))

    def assign(self, meta, children) -> Assign:
        *targets, value = children
        return Assign(targets, value, span=Span.from_meta(meta))

    def augassign_op(self, meta, children) -> str:
        return str(children[0])[:-1]

    def aug_assign(self, meta, children) -> AugAssign:
        target, op, value = children
        return AugAssign(target, op, value, span=Span.from_meta(meta))

    def annotated_assign(self, meta, children) -> AnnAssign:
        target, annotation, value = children
        return AnnAssign(target, annotation, value, span=Span.from_meta(meta))

    def pass_stmt(self, meta, _) -> Pass:
        return Pass(span=Span.from_meta(meta))

    def break_stmt(self, meta, _) -> Break:
        return Break(span=Span.from_meta(meta))

    def continue_stmt(self, meta, _) -> Continue:
        return Continue(span=Span.from_meta(meta))

    def return_stmt(self, meta, children) -> Return:
        return Return(children[0], span=Span.from_meta(meta))

    def raise_stmt(self, meta, children) -> Raise:
        return Raise(*children, span=Span.from_meta(meta))

    def global_stmt(self, meta, names) -> Global:
        return Global(names, span=Span.from_meta(meta))

    def nonlocal_stmt(self, meta, names) -> Nonlocal:
        return Nonlocal(names, span=Span.from_meta(meta))

    def dotted_as_name(self, meta, children) -> tuple[str, str | None]:
        dotted, alias = children
        return dotted.id, None if alias is None else str(alias)

    def import_stmt(self, meta, names) -> Import:
        return Import(names, span=Span.from_meta(meta))

    def from_import_stmt(self, meta, children) -> FromImport:
        module, *names = children
        return FromImport(module.id, names, span=Span.from_meta(meta))

    def del_stmt(self, meta, children) -> Delete:
        return Delete(children[0], span=Span.from_meta(meta))

    def assert_stmt(self, meta, children) -> Assert:
        return Assert(*children, span=Span.from_meta(meta))

    def yield_stmt(self, meta, children) -> YieldStmt:
        return YieldStmt(children[0], span=Span.from_meta(meta))

    # -- compound statements --

    def suite(self, meta, stmts) -> list[Statement]:
        return list(stmts)

    def if_stmt(self, meta, children) -> If:
        test, body, *elifs, orelse = children
        node = If(test, body, elifs, orelse)
        node.span = _span_to_end(meta, node)
        return node

    def elif_clause(self, meta, children) -> Elif:
        node = Elif(*children)
        node.span = _span_to_end(meta, node)
        return node

    def while_stmt(self, meta, children) -> While:
        node = While(*children)
        node.span = _span_to_end(meta, node)
        return node

    def for_stmt(self, meta, children) -> For:
        node = For(*children)
        node.span = _span_to_end(meta, node)
        return node

    def except_clause(self, meta, children) -> ExceptHandler:
        node = ExceptHandler(*children)
        node.span = _span_to_end(meta, node)
        return node

    def try_stmt(self, meta, children) -> Try:
        body, *handlers, orelse, finalbody = children
        node = Try(body, handlers, orelse, finalbody)
        node.span = _span_to_end(meta, node)
        return node

    def with_item(self, meta, children) -> WithItem:
        return WithItem(*children, span=Span.from_meta(meta))

    def with_stmt(self, meta, children) -> With:
        *items, body = children
        node = With(items, body)
        node.span = _span_to_end(meta, node)
        return node

    # -- expressions --

    def ternary(self, meta, children) -> IfExp:
        return IfExp(*children, span=Span.from_meta(meta))

    def lambda_params(self, meta, names) -> list[str]:
        return [str(n) for n in names]

    def lambdef(self, meta, children) -> Lambda:
        params, body = children
        return Lambda(params or [], body, span=Span.from_meta(meta))

    def walrus(self, meta, children) -> NamedExpr:
        return NamedExpr(children[0], children[1], span=Span.from_meta(meta))

    def or_test(self, meta, values) -> BoolOp:
        return BoolOp('or', values, span=Span.from_meta(meta))

    def and_test(self, meta, values) -> BoolOp:
        return BoolOp('and', values, span=Span.from_meta(meta))

    def not_op(self, meta, children) -> UnaryOp:
        return UnaryOp('not', children[0], span=Span.from_meta(meta))

    def comp_op(self, meta, tokens) -> str:
        return ' '.join(str(t) for t in tokens)

    def comparison(self, meta, children) -> Compare:
        return Compare(children[0], children[1::2], children[2::2], span=Span.from_meta(meta))

    def star_expr(self, meta, children) -> Starred:
        return Starred(children[0], span=Span.from_meta(meta))

    def or_expr(self, meta, children) -> Expression:
        return _fold_implicit('|', children)

    def xor_expr(self, meta, children) -> Expression:
        return _fold_implicit('^', children)

    def and_expr(self, meta, children) -> Expression:
        return _fold_implicit('&', children)

    def shift_expr(self, meta, children) -> Expression:
        return _fold_binary(children)

    def arith_expr(self, meta, children) -> Expression:
        return _fold_binary(children)

    def term(self, meta, children) -> Expression:
        return _fold_binary(children)

    def unary(self, meta, children) -> UnaryOp:
        return UnaryOp(children[0], children[1], span=Span.from_meta(meta))

    def power_op(self, meta, children) -> BinOp:
        return BinOp(children[0], '**', children[1], span=Span.from_meta(meta))

    def _make_call(self, meta, func: Expression, args: list[Expression] | None) -> Call:
        positional = [a for a in args or () if not isinstance(a, Keyword)]
        keywords = [a for a in args or () if isinstance(a, Keyword)]
        return Call(func, positional, keywords, span=Span.from_meta(meta))

    def call(self, meta, children) -> Call:
        func, args = children
        return self._make_call(meta, func, args)

    def getitem(self, meta, children) -> Subscript:
        return Subscript(children[0], children[1], span=Span.from_meta(meta))

    def getattr(self, meta, children) -> Attribute:
        return Attribute(children[0], children[1], span=Span.from_meta(meta))

    def tuple_display(self, meta, elts) -> TupleDisplay:
        return TupleDisplay(elts, span=Span.from_meta(meta))

    def target_tuple(self, meta, elts) -> TupleDisplay:
        return TupleDisplay(elts, span=Span.from_meta(meta))

    def subscript_tuple(self, meta, elts) -> TupleDisplay:
        return TupleDisplay(elts, span=Span.from_meta(meta))

    def list_display(self, meta, elts) -> ListDisplay:
        return ListDisplay(elts, span=Span.from_meta(meta))

    def set_display(self, meta, elts) -> SetDisplay:
        return SetDisplay(elts, span=Span.from_meta(meta))

    def key_value(self, meta, children) -> KeyValue:
        return KeyValue(children[0], children[1], span=Span.from_meta(meta))

    def dict_display(self, meta, items) -> DictDisplay:
        # "**" is filtered out of the parse tree, so a bare expression is an unpack
        items = [i if isinstance(i, KeyValue) else DoubleStarred(i, span=i.span) for i in items]
        return DictDisplay(items, span=Span.from_meta(meta))

    def comprehension(self, meta, children) -> _CompParts:
        return _CompParts(children[0], children[1:])

    def comp_for(self, meta, children) -> CompFor:
        return CompFor(children[0], children[1], span=Span.from_meta(meta))

    def comp_if(self, meta, children) -> CompIf:
        return CompIf(children[0], span=Span.from_meta(meta))

    def list_comp(self, meta, children) -> ListComp:
        return ListComp(*children[0], span=Span.from_meta(meta))

    def set_comp(self, meta, children) -> SetComp:
        return SetComp(*children[0], span=Span.from_meta(meta))

    def dict_comp(self, meta, children) -> DictComp:
        return DictComp(*children[0], span=Span.from_meta(meta))

    def generator_comp(self, meta, children) -> GeneratorExp:
        return GeneratorExp(*children[0], span=Span.from_meta(meta))

    def slice(self, meta, children) -> Slice:
        return Slice(*children, span=Span.from_meta(meta))

    def sliceop(self, meta, children) -> Expression | None:
        return children[0]

    def arguments(self, meta, args) -> list[Expression | Keyword]:
        return list(args)

    def generator_argument(self, meta, children) -> list[Expression]:
        return [GeneratorExp(*children[0], span=Span.from_meta(meta))]

    def keyword_argument(self, meta, children) -> Keyword:
        key, value = children
        if not isinstance(key, Name):
            raise SourceSyntaxError(key.span.line, key.span.column, str(key), ['NAME'])
        return Keyword(key.id, value, span=Span.from_meta(meta))

    def star_argument(self, meta, children) -> Starred:
        return Starred(children[0], span=Span.from_meta(meta))

    def kwargs_argument(self, meta, children) -> DoubleStarred:
        return DoubleStarred(children[0], span=Span.from_meta(meta))

    def var(self, meta, children) -> Name:
        return Name(children[0], span=Span.from_token(children[0]))

    def number(self, meta, children) -> Constant:
        text = str(children[0])
        if children[0].type == 'FLOAT_NUMBER':
            value: int | float = float(text.replace('_', ''))
        else:
            value = int(text, 0)
        return Constant(value, span=Span.from_meta(meta))

    def strings(self, meta, tokens) -> Expression:
        span = Span.from_meta(meta)
        text = ' '.join(str(t) for t in tokens)
        parts = []
        for token in tokens:
            literal = str(token)
            prefix = literal[: min(i for i in (literal.find('"'), literal.find("'")) if i >= 0)]
            prefix = prefix.lower()
            if 'f' in prefix:
                return Unsupported('f-string', text, span=span)
            if 'b' in prefix:
                return Unsupported('bytes-literal', text, span=span)
            parts.append(_unescape(literal))
        return Constant(''.join(parts), span=span)

    def const_none(self, meta, _) -> Constant:
        return Constant(None, span=Span.from_meta(meta))

    def const_true(self, meta, _) -> Constant:
        return Constant(True, span=Span.from_meta(meta))

    def const_false(self, meta, _) -> Constant:
        return Constant(False, span=Span.from_meta(meta))


def _unescape(literal: str) -> str:
    return ast.literal_eval(literal)


class SourceIndenter(Indenter):
    NL_type = '_NEWLINE'
    OPEN_PAREN_types = ['LPAR', 'LSQB', 'LBRACE']
    CLOSE_PAREN_types = ['RPAR', 'RSQB', 'RBRACE']
    INDENT_type = '_INDENT'
    DEDENT_type = '_DEDENT'
    tab_len = 8


GRAMMAR = pathlib.Path(__file__).parent / 'grammar.lark'

with GRAMMAR.open() as fp:
    grammar = fp.read()

parser = Lark(
    grammar,
    start=['file_input', 'eval_input'],
    parser='lalr',
    postlex=SourceIndenter(),
    propagate_positions=True,
    maybe_placeholders=True,
)


# ==== entry points ====


class SyntaxTree:
    """A parsed function definition.

    Attributes
    ----------
    root: :class:`FunctionDef`
        The single top-level definition
    source: :class:`str`
        The text the tree was parsed from
    """

    __slots__ = ('root', 'source')

    def __init__(self, root: FunctionDef, source: str) -> None:
        self.root = root
        self.source = source

    @property
    def name(self) -> str:
        return self.root.name

    @property
    def source_lines(self) -> int:
        """Physical lines from the ``def`` line through the last line of the body.

        Blank lines inside the body count; trailing blank lines do not.
        """
        span = self.root.span
        start = span.line
        if self.root.decorators:
            start = self.root.decorators[-1].span.end_line + 1
        return span.end_line - start + 1

    def walk(self) -> Iterator[Node]:
        """Every node in the tree, parents before children."""
        from .utils import walk

        return walk(self.root)

    def pretty(self) -> str:
        """Canonical source text. Parsing it yields a structurally equal tree."""
        return str(self.root) + '\n'

    def __str__(self) -> str:
        return self.pretty()

    def __repr__(self) -> str:
        return f'<SyntaxTree {self.name!r} lines={self.source_lines}>'


def _convert_error(e: UnexpectedInput) -> SourceSyntaxError:
    if isinstance(e, UnexpectedToken):
        got = e.token.type if e.token.type == '$END' else e.token
        return SourceSyntaxError(e.line, e.column, got, e.expected)
    if isinstance(e, UnexpectedCharacters):
        return SourceSyntaxError(e.line, e.column, e.char, e.allowed or ())
    if isinstance(e, UnexpectedEOF):
        return SourceSyntaxError(e.line, e.column, 'end of input', e.expected)
    return SourceSyntaxError(getattr(e, 'line', 0), getattr(e, 'column', 0), str(e), ())


def _parse_nodes(text: str, start: str) -> Any:
    if not text.endswith('\n'):
        text += '\n'
    try:
        tree = parser.parse(text, start=start)
        return SourceTransformer().transform(tree)
    except UnexpectedInput as e:
        raise _convert_error(e) from None
    except DedentError as e:
        raise SourceSyntaxError(0, 0, 'dedent', ['consistent indentation']) from e
    except VisitError as e:
        if isinstance(e.orig_exc, StepwiseError):
            raise e.orig_exc from None
        raise


@functools.lru_cache(maxsize=256)
def parse(source: str) -> SyntaxTree:
    """Parses the source text of a single function definition.

    Parameters
    ----------
    source: :class:`str`
        The complete source text

    Returns
    -------
    :class:`SyntaxTree`
        The parsed tree. Trees are shared between calls with the same source and
        must not be mutated.

    Raises
    ------
    :class:`~stepwise.SourceSyntaxError`
        The text is not valid in the language.
    :class:`~stepwise.DefinitionCountError`
        The text holds anything other than exactly one top-level definition.
    """
    stmts = _parse_nodes(source, 'file_input')
    defs = [s for s in stmts if isinstance(s, FunctionDef)]
    if len(defs) != 1 or len(stmts) != 1:
        raise DefinitionCountError(len(defs), len(stmts) - len(defs))
    return SyntaxTree(defs[0], source)


def parse_expression(text: str) -> Expression:
    """Parses a single expression, e.g. a literal from a model response.

    A comma-separated list is read as a tuple, as in ``1, 2``.

    Raises
    ------
    :class:`~stepwise.SourceSyntaxError`
        The text is not a single expression.
    """
    text = text.strip()
    if not text:
        raise SourceSyntaxError(1, 1, 'end of input', ['expression'])
    return _parse_nodes(text, 'eval_input')
