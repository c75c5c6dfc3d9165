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

from collections.abc import Callable
from dataclasses import dataclass
from typing import TypeVar

from . import syntax as ast
from .builtins import BUILTINS, FUNCTION_NAMES, METHOD_NAMES, METHODS, MODULES
from .errors import SubsetError
from .utils import bound_names, target_names


__all__ = (
    'CONSTRUCTS',
    'SubsetViolation',
    'SubsetValidator',
    'validate_subset',
    'require_subset',
)

N = TypeVar('N', bound=ast.Node)

#: Every construct name a violation may carry. ``other`` is the catch-all.
CONSTRUCTS = frozenset(
    {
        'class-definition',
        'decorator',
        'return-annotation',
        'parameter-annotation',
        'default-parameter',
        'star-parameter',
        'variable-annotation',
        'global-declaration',
        'import',
        'from-import',
        'raise',
        'try',
        'with',
        'del',
        'assert',
        'yield',
        'loop-else',
        'break-outside-loop',
        'lambda',
        'walrus',
        'starred',
        'keyword-argument',
        'attribute-access',
        'unknown-method',
        'unknown-function',
        'indirect-call',
        'f-string',
        'bytes-literal',
        'matrix-multiply',
        'other',
    }
)


@dataclass(frozen=True)
class SubsetViolation:
    """A construct outside the supported language subset.

    Attributes
    ----------
    span: :class:`~stepwise.syntax.Span`
        Where the construct appears
    construct: :class:`str`
        A name from :data:`CONSTRUCTS`
    message: :class:`str`
        Human-readable explanation
    """

    span: ast.Span
    construct: str
    message: str

    def __post_init__(self) -> None:
        if self.construct not in CONSTRUCTS:
            raise ValueError(f'Unknown construct name {self.construct!r}')

    def __str__(self) -> str:
        return f'{self.span.line}:{self.span.column}: [{self.construct}] {self.message}'


_SIMPLE_VIOLATIONS: dict[type[ast.Node], tuple[str, str]] = {
    ast.ClassDef: ('class-definition', 'class definitions are not supported'),
    ast.AnnAssign: ('variable-annotation', 'variable annotations are not supported'),
    ast.Global: ('global-declaration', 'global declarations are not supported'),
    ast.FromImport: ('from-import', 'from-imports are not supported'),
    ast.Raise: ('raise', 'raising exceptions is not supported'),
    ast.Try: ('try', 'exception handling is not supported'),
    ast.With: ('with', 'with statements are not supported'),
    ast.Delete: ('del', 'del statements are not supported'),
    ast.Assert: ('assert', 'assert statements are not supported'),
    ast.YieldStmt: ('yield', 'generators are not supported'),
    ast.Lambda: ('lambda', 'lambda expressions are not supported'),
    ast.NamedExpr: ('walrus', 'assignment expressions are not supported'),
    ast.Starred: ('starred', 'star unpacking is not supported'),
    ast.DoubleStarred: ('starred', 'star unpacking is not supported'),
}


class SubsetValidator:
    """Walks a syntax tree and collects every :class:`SubsetViolation`.

    A validator holds per-walk state; use one instance per tree.
    """

    def __init__(self) -> None:
        self.violations: list[SubsetViolation] = []
        self._scopes: list[set[str]] = []
        self._loops = 0

    def _get_visitor(self, _type: type[N]) -> Callable[[N], None]:
        _nodes = {
            ast.FunctionDef: self._visit_functiondef,
            ast.Import: self._visit_import,
            ast.Nonlocal: self._visit_nonlocal,
            ast.Assign: self._visit_assign,
            ast.AugAssign: self._visit_augassign,
            ast.For: self._visit_loop,
            ast.While: self._visit_loop,
            ast.Break: self._visit_loop_control,
            ast.Continue: self._visit_loop_control,
            ast.Call: self._visit_call,
            ast.Attribute: self._visit_attribute,
            ast.BinOp: self._visit_binop,
            ast.Unsupported: self._visit_unsupported,
            ast.ListComp: self._visit_comprehension,
            ast.SetComp: self._visit_comprehension,
            ast.DictComp: self._visit_comprehension,
            ast.GeneratorExp: self._visit_comprehension,
        }
        return _nodes.get(_type, self._visit_generic)  # type: ignore

    def validate(self, tree: ast.SyntaxTree) -> list[SubsetViolation]:
        self.violations = []
        self._scopes = [{tree.root.name}]
        self._loops = 0
        self._visit(tree.root)
        return sorted(self.violations, key=lambda v: (v.span.line, v.span.column))

    def _flag(self, node: ast.Node, construct: str, message: str) -> None:
        self.violations.append(SubsetViolation(node.span, construct, message))

    def _in_scope(self, name: str) -> bool:
        return any(name in scope for scope in self._scopes)

    def _visit(self, node: ast.Node) -> None:
        simple = _SIMPLE_VIOLATIONS.get(type(node))
        if simple is not None:
            self._flag(node, *simple)
        self._get_visitor(type(node))(node)

    def _visit_generic(self, node: ast.Node) -> None:
        for child in node.children:
            self._visit(child)

    def _visit_functiondef(self, node: ast.FunctionDef) -> None:
        for decorator in node.decorators:
            self._flag(decorator, 'decorator', 'decorators are not supported')
        if node.returns is not None:
            self._flag(node.returns, 'return-annotation', 'return annotations are not supported')
        for param in node.params:
            if param.kind in ('star', 'kwargs'):
                self._flag(param, 'star-parameter', f'variadic parameter {param}')
                continue
            if param.annotation is not None:
                self._flag(param, 'parameter-annotation', f'annotated parameter {param.name!r}')
            if param.default is not None:
                self._flag(param, 'default-parameter', f'parameter {param.name!r} has a default')
        self._scopes.append(bound_names(node))
        # loops never enclose the body of a nested def
        outer_loops, self._loops = self._loops, 0
        for stmt in node.body:
            self._visit(stmt)
        self._loops = outer_loops
        self._scopes.pop()

    def _visit_import(self, node: ast.Import) -> None:
        for module, alias in node.names:
            if module not in MODULES:
                self._flag(node, 'import', f'module {module!r} is not available')
            elif alias is not None:
                self._flag(node, 'import', f'module {module!r} cannot be renamed')

    def _visit_nonlocal(self, node: ast.Nonlocal) -> None:
        # the innermost scope is the function declaring the names
        enclosing = self._scopes[1:-1]
        for name in node.names:
            if not any(name in scope for scope in enclosing):
                self._flag(node, 'other', f'no enclosing binding for nonlocal {name!r}')

    def _check_target(self, target: ast.Expression, *, allow_unpack: bool = True) -> None:
        if isinstance(target, ast.Name):
            return
        if isinstance(target, ast.Subscript):
            self._visit(target.value)
            self._visit(target.index)
            return
        if allow_unpack and isinstance(target, (ast.TupleDisplay, ast.ListDisplay)):
            for elt in target.elts:
                self._check_target(elt)
            return
        if isinstance(target, ast.Attribute):
            self._flag(target, 'attribute-access', f'cannot assign to attribute {target.attr!r}')
        elif isinstance(target, ast.Starred):
            self._flag(target, 'starred', 'starred assignment targets are not supported')
        else:
            self._flag(target, 'other', f'cannot assign to {target}')

    def _visit_assign(self, node: ast.Assign) -> None:
        for target in node.targets:
            self._check_target(target)
        self._visit(node.value)

    def _visit_augassign(self, node: ast.AugAssign) -> None:
        self._check_target(node.target, allow_unpack=False)
        if node.op == '@':
            self._flag(node, 'matrix-multiply', 'the @ operator is not supported')
        self._visit(node.value)

    def _visit_loop(self, node: ast.For | ast.While) -> None:
        if node.orelse:
            self._flag(node, 'loop-else', 'loop else clauses are not supported')
        if isinstance(node, ast.For):
            self._check_target(node.target)
            self._visit(node.iter)
        else:
            self._visit(node.test)
        self._loops += 1
        for stmt in node.body:
            self._visit(stmt)
        self._loops -= 1
        for stmt in node.orelse:
            self._visit(stmt)

    def _visit_loop_control(self, node: ast.Break | ast.Continue) -> None:
        if not self._loops:
            keyword = 'break' if isinstance(node, ast.Break) else 'continue'
            self._flag(node, 'break-outside-loop', f'{keyword!r} outside a loop')

    def _visit_comprehension(self, node: ast.ListComp) -> None:
        names = set()
        for clause in node.clauses:
            if isinstance(clause, ast.CompFor):
                names.update(target_names(clause.target))
        self._scopes.append(names)
        for clause in node.clauses:
            if isinstance(clause, ast.CompFor):
                self._check_target(clause.target)
                self._visit(clause.iter)
            else:
                self._visit(clause.test)
        self._visit(node.elt)
        self._scopes.pop()

    def _visit_binop(self, node: ast.BinOp) -> None:
        if node.op == '@':
            self._flag(node, 'matrix-multiply', 'the @ operator is not supported')
        self._visit_generic(node)

    def _visit_unsupported(self, node: ast.Unsupported) -> None:
        self._flag(node, node.construct, f'{node.construct} literals are not supported')

    def _visit_attribute(self, node: ast.Attribute) -> None:
        self._flag(node, 'attribute-access', f'attribute {node.attr!r} used outside a call')
        self._visit(node.value)

    def _visit_call(self, node: ast.Call) -> None:
        allowed: frozenset[str] = frozenset()
        func = node.func
        if isinstance(func, ast.Name):
            if self._in_scope(func.id):
                pass
            elif func.id in FUNCTION_NAMES:
                allowed = BUILTINS[func.id].keywords
            else:
                self._flag(func, 'unknown-function', f'{func.id!r} is not defined')
        elif isinstance(func, ast.Attribute):
            receiver = func.value
            if isinstance(receiver, ast.Name) and receiver.id in MODULES:
                if func.attr not in MODULES[receiver.id].functions:
                    self._flag(
                        func, 'unknown-function', f'{receiver.id}.{func.attr} is not available'
                    )
            else:
                if func.attr not in METHOD_NAMES:
                    self._flag(func, 'unknown-method', f'method {func.attr!r} is not available')
                else:
                    allowed = frozenset().union(*(spec.keywords for _, spec in METHODS[func.attr]))
                self._visit(receiver)
        else:
            self._flag(func, 'indirect-call', f'cannot call {func}')
            self._visit(func)

        for keyword in node.keywords:
            if keyword.arg not in allowed:
                self._flag(
                    keyword,
                    'keyword-argument',
                    f'keyword argument {keyword.arg!r} is not supported here',
                )
            self._visit(keyword.value)
        for arg in node.args:
            self._visit(arg)


def validate_subset(tree: ast.SyntaxTree) -> list[SubsetViolation]:
    """Lists the constructs in ``tree`` that fall outside the supported subset.

    Parameters
    ----------
    tree: :class:`~stepwise.SyntaxTree`
        A parsed function

    Returns
    -------
    List[:class:`SubsetViolation`]
        Violations in source order; empty when the whole tree is supported.
    """
    return SubsetValidator().validate(tree)


def require_subset(tree: ast.SyntaxTree) -> None:
    """Raises :class:`~stepwise.SubsetError` unless the tree validates cleanly."""
    violations = validate_subset(tree)
    if violations:
        raise SubsetError(violations)
