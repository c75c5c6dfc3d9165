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

import copy
from collections.abc import Iterator
from typing import TypeVar

from . import syntax


T = TypeVar('T', bound=syntax.ChildMixin)


__all__ = (
    'walk',
    'structurally_equal',
    'bound_names',
    'target_names',
    'wrap_body',
)


def walk(node: T) -> Iterator[T]:
    """Yields every node in the tree in source order, parents before children."""
    stack = [node]
    while stack:
        current = stack.pop()
        yield current
        stack.extend(reversed(current.children))


def structurally_equal(a: syntax.Node, b: syntax.Node) -> bool:
    """Whether two trees are equal ignoring source positions."""
    return a.dump() == b.dump()


def target_names(target: syntax.Node) -> list[str]:
    """The names bound by an assignment or loop target, left to right.

    Subscript and attribute targets bind nothing.
    """
    if isinstance(target, syntax.Name):
        return [target.id]
    if isinstance(target, (syntax.TupleDisplay, syntax.ListDisplay)):
        return [n for elt in target.elts for n in target_names(elt)]
    if isinstance(target, syntax.Starred):
        return target_names(target.value)
    return []


def bound_names(fn: syntax.FunctionDef) -> set[str]:
    """The names local to a function body.

    That is the parameters plus every name the body binds directly (assignment,
    loop and ``with`` targets, nested definitions, imports), minus the names it
    declares ``nonlocal`` or ``global``. Nested function bodies and comprehension
    targets have scopes of their own and are not included.
    """
    names = {p.name for p in fn.params}
    declared: set[str] = set()

    def visit(node: syntax.Node) -> None:
        if isinstance(node, (syntax.Assign,)):
            for target in node.targets:
                names.update(target_names(target))
        elif isinstance(node, (syntax.AugAssign, syntax.AnnAssign, syntax.For)):
            names.update(target_names(node.target))
        elif isinstance(node, syntax.NamedExpr):
            names.add(node.target)
        elif isinstance(node, (syntax.Global, syntax.Nonlocal)):
            declared.update(node.names)
        elif isinstance(node, syntax.Import):
            for module, alias in node.names:
                names.add(alias or module.split('.')[0])
        elif isinstance(node, syntax.FromImport):
            names.update(node.names)
        elif isinstance(node, syntax.WithItem) and node.name is not None:
            names.add(node.name)
        elif isinstance(node, syntax.ExceptHandler) and node.name is not None:
            names.add(node.name)
        elif isinstance(node, (syntax.FunctionDef, syntax.ClassDef)):
            names.add(node.name)
            return
        elif isinstance(node, (syntax.Lambda, syntax._Comprehension)):
            return
        for child in node.children:
            visit(child)

    for stmt in fn.body:
        visit(stmt)
    return names - declared


def wrap_body(fn: syntax.FunctionDef, test: syntax.Expression | None = None) -> syntax.FunctionDef:
    """Returns a copy of the function whose whole body sits inside ``if <test>:``.

    ``test`` defaults to ``True``. The wrapper adds one nesting level and one
    decision point, and calls nothing.
    """
    wrapped = copy.copy(fn)
    condition = test if test is not None else syntax.Constant(True)
    wrapped.body = [syntax.If(condition, list(fn.body))]
    return wrapped
