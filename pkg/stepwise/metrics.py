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
from collections.abc import Callable, Iterable, Mapping, Sequence
from dataclasses import asdict, dataclass
from typing import Any, TypeVar

from . import syntax as ast
from .errors import CorpusError
from .subset import require_subset


__all__ = (
    'LEVELS',
    'ComplexityReport',
    'DifficultyLabel',
    'CorpusSummary',
    'FunctionProfile',
    'measure',
    'stratify',
    'corpus_summary',
)

log = logging.getLogger(__name__)

N = TypeVar('N', bound=ast.Node)

#: Difficulty levels, easiest first.
LEVELS = ('easy', 'medium', 'hard')

WEIGHT_D = 3
WEIGHT_F = 2
WEIGHT_C = 1
WEIGHT_L = 0.5


@dataclass(frozen=True)
class ComplexityReport:
    """The four structural measures of a function and their weighted score.

    Attributes
    ----------
    C: :class:`int`
        Decision points: ``if`` statements, ``elif`` arms, conditional expressions,
        ``for`` and ``while`` loops, and every comprehension ``for``/``if`` clause.
        Boolean operators are not counted.
    D: :class:`int`
        Maximum nesting depth of ``if``/``for``/``while`` bodies; 0 for straight-line code.
    F: :class:`int`
        Call expressions of any kind.
    L: :class:`int`
        Physical lines spanned by the definition.
    loops: :class:`int`
        ``for`` and ``while`` statements (a part of ``C``).
    conditionals: :class:`int`
        ``if`` statements, ``elif`` arms and conditional expressions (a part of ``C``).
    """

    C: int
    D: int
    F: int
    L: int
    loops: int = 0
    conditionals: int = 0

    @property
    def score(self) -> float:
        """``3D + 2F + C + 0.5L``. Exact: the only fraction is a half."""
        return self.D * WEIGHT_D + self.F * WEIGHT_F + self.C * WEIGHT_C + self.L * WEIGHT_L

    def to_record(self) -> dict[str, Any]:
        record = asdict(self)
        record['score'] = self.score
        return record


class _Counter:
    def __init__(self) -> None:
        self.C = 0
        self.D = 0
        self.F = 0
        self.loops = 0
        self.conditionals = 0

    def _get_visitor(self, _type: type[N]) -> Callable[[N, int], None]:
        _nodes = {
            ast.If: self._visit_if,
            ast.For: self._visit_for,
            ast.While: self._visit_while,
            ast.IfExp: self._visit_ifexp,
            ast.Call: self._visit_call,
            ast.ListComp: self._visit_comprehension,
            ast.SetComp: self._visit_comprehension,
            ast.DictComp: self._visit_comprehension,
            ast.GeneratorExp: self._visit_comprehension,
        }
        return _nodes.get(_type, self._visit_generic)  # type: ignore

    def visit(self, node: ast.Node, depth: int) -> None:
        self._get_visitor(type(node))(node, depth)

    def _visit_all(self, nodes: Iterable[ast.Node], depth: int) -> None:
        for node in nodes:
            self.visit(node, depth)

    def _body(self, body: Sequence[ast.Node], depth: int) -> None:
        if body:
            self.D = max(self.D, depth + 1)
        self._visit_all(body, depth + 1)

    def _visit_generic(self, node: ast.Node, depth: int) -> None:
        self._visit_all(node.children, depth)

    def _visit_if(self, node: ast.If, depth: int) -> None:
        arms = 1 + len(node.elifs)
        self.C += arms
        self.conditionals += arms
        self.visit(node.test, depth)
        self._body(node.body, depth)
        for clause in node.elifs:
            self.visit(clause.test, depth)
            self._body(clause.body, depth)
        self._body(node.orelse, depth)

    def _visit_for(self, node: ast.For, depth: int) -> None:
        self.C += 1
        self.loops += 1
        self.visit(node.target, depth)
        self.visit(node.iter, depth)
        self._body(node.body, depth)
        self._body(node.orelse, depth)

    def _visit_while(self, node: ast.While, depth: int) -> None:
        self.C += 1
        self.loops += 1
        self.visit(node.test, depth)
        self._body(node.body, depth)
        self._body(node.orelse, depth)

    def _visit_ifexp(self, node: ast.IfExp, depth: int) -> None:
        self.C += 1
        self.conditionals += 1
        self._visit_generic(node, depth)

    def _visit_call(self, node: ast.Call, depth: int) -> None:
        self.F += 1
        self._visit_generic(node, depth)

    def _visit_comprehension(self, node: ast.ListComp, depth: int) -> None:
        self.C += len(node.clauses)
        self._visit_generic(node, depth)


def measure(tree: ast.SyntaxTree) -> ComplexityReport:
    """Measures a parsed function.

    Parameters
    ----------
    tree: :class:`~stepwise.SyntaxTree`
        A tree that validates cleanly

    Returns
    -------
    :class:`ComplexityReport`
        The measures and score

    Raises
    ------
    :class:`~stepwise.SubsetError`
        The tree has subset violations.
    """
    require_subset(tree)
    counter = _Counter()
    # a nested def neither adds depth nor hides its body
    counter._visit_all(tree.root.body, 0)
    return ComplexityReport(
        C=counter.C,
        D=counter.D,
        F=counter.F,
        L=tree.source_lines,
        loops=counter.loops,
        conditionals=counter.conditionals,
    )


@dataclass(frozen=True)
class DifficultyLabel:
    """
    Attributes
    ----------
    level: :class:`str`
        One of :data:`LEVELS`
    thresholds: Tuple[:class:`float`, ...]
        The cut scores; a score equal to a cut goes to the lower level
    """

    level: str
    thresholds: tuple[float, ...]

    @property
    def rank(self) -> int:
        return LEVELS.index(self.level)

    def __str__(self) -> str:
        return self.level


def stratify(scores: Iterable[tuple[str, float]], k: int = 3) -> dict[str, DifficultyLabel]:
    """Labels functions by quantile of their scores.

    The ``j``-th cut is the ``ceil(n * j / k)``-th smallest score, so with ``k = 3``
    the cuts are the empirical 1/3 and 2/3 quantiles. A score at or below a cut
    goes to the lower level, which makes labels monotone in score and independent
    of input order.

    Parameters
    ----------
    scores: Iterable[Tuple[:class:`str`, :class:`float`]]
        ``(id, score)`` pairs
    k: :class:`int`
        Number of levels; only 3 has level names

    Raises
    ------
    :class:`~stepwise.CorpusError`
        No scores were given.
    """
    pairs = list(scores)
    if not pairs:
        raise CorpusError('Cannot stratify an empty set of scores')
    if k != len(LEVELS):
        raise ValueError(f'Only {len(LEVELS)} difficulty levels are defined')
    ordered = sorted(score for _, score in pairs)
    n = len(ordered)
    cuts = tuple(ordered[(n * j + k - 1) // k - 1] for j in range(1, k))
    log.debug('stratified %d scores with cuts %s', n, cuts)

    labels = {}
    for fid, score in pairs:
        level = next((i for i, cut in enumerate(cuts) if score <= cut), k - 1)
        labels[fid] = DifficultyLabel(LEVELS[level], cuts)
    return labels


@dataclass(frozen=True)
class FunctionProfile:
    """A function's measures and difficulty, one row of an analysis."""

    function_id: str
    report: ComplexityReport
    label: DifficultyLabel

    def to_record(self) -> dict[str, Any]:
        return {
            'function_id': self.function_id,
            'level': self.label.level,
            **self.report.to_record(),
        }


@dataclass(frozen=True)
class CorpusSummary:
    """Aggregate statistics over a benchmark corpus."""

    functions: int
    tests: int
    mean_tests: float
    mean_C: float
    mean_D: float
    loops: int
    conditionals: int
    calls: int
    mean_instruction_chars: float
    mean_instruction_words: float

    def to_record(self) -> dict[str, Any]:
        return asdict(self)


def _mean(values: Sequence[float]) -> float:
    return sum(values) / len(values) if values else 0.0


def corpus_summary(
    reports: Mapping[str, ComplexityReport],
    test_counts: Mapping[str, int],
    instructions: Sequence[str] = (),
) -> CorpusSummary:
    """Summarizes a corpus.

    Parameters
    ----------
    reports: Mapping[:class:`str`, :class:`ComplexityReport`]
        One report per function id
    test_counts: Mapping[:class:`str`, :class:`int`]
        Surviving tests per function id
    instructions: Sequence[:class:`str`]
        Full text of each verified instruction
    """
    values = list(reports.values())
    counts = [test_counts.get(fid, 0) for fid in reports]
    return CorpusSummary(
        functions=len(values),
        tests=sum(counts),
        mean_tests=_mean(counts),
        mean_C=_mean([r.C for r in values]),
        mean_D=_mean([r.D for r in values]),
        loops=sum(r.loops for r in values),
        conditionals=sum(r.conditionals for r in values),
        calls=sum(r.F for r in values),
        mean_instruction_chars=_mean([len(text) for text in instructions]),
        mean_instruction_words=_mean([len(text.split()) for text in instructions]),
    )
