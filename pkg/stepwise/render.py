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
import json
from collections.abc import Callable, Iterable
from typing import Any, TypeVar, Union

from .corpus import ERROR_CATEGORIES
from .harness import OVERALL, Accuracy, ErrorDistribution, MetricsTable
from .metrics import LEVELS, CorpusSummary, FunctionProfile


__all__ = ('Renderer', 'TableRenderer', 'RecordsRenderer', 'renderer_for')

Renderable = Union[MetricsTable, ErrorDistribution, FunctionProfile, CorpusSummary]
R = TypeVar('R', MetricsTable, ErrorDistribution, FunctionProfile, CorpusSummary)

_COLUMNS = (*LEVELS, OVERALL)


class Renderer(abc.ABC):
    """An ABC for turning analysis and evaluation results into text.

    Subclasses implement the ``render_*`` methods, one per result type. Runs of
    results of the same type may be introduced by a :meth:`preamble`.
    """

    def _get_renderer(self, _type: type[R]) -> Callable[[R], str]:
        _nodes = {
            MetricsTable: self.render_metrics,
            ErrorDistribution: self.render_errors,
            FunctionProfile: self.render_profile,
            CorpusSummary: self.render_summary,
        }
        return _nodes[_type]  # type: ignore

    def render(self, items: Iterable[Renderable]) -> str:
        """Renders every item, in order, one or more lines each."""
        lines: list[str] = []
        previous: type | None = None
        for item in items:
            if type(item) is not previous:
                previous = type(item)
                lines.extend(self.preamble(previous))
            lines.append(self._get_renderer(type(item))(item))
        return ''.join(f'{line}\n' for line in lines)

    def preamble(self, _type: type) -> list[str]:
        return []

    def render_metrics(self, node: MetricsTable) -> str:
        raise NotImplementedError

    def render_errors(self, node: ErrorDistribution) -> str:
        raise NotImplementedError

    def render_profile(self, node: FunctionProfile) -> str:
        raise NotImplementedError

    def render_summary(self, node: CorpusSummary) -> str:
        raise NotImplementedError


def _pct(value: float) -> str:
    return f'{value:.1f}'


class TableRenderer(Renderer):
    """Delimiter-separated rows with a header line per result type.

    A metrics table gives two rows: function-level accuracy, then per-test
    accuracy marked ``[per-test]``.
    """

    def __init__(self, delimiter: str = '\t') -> None:
        self.delimiter = delimiter

    def _row(self, cells: Iterable[Any]) -> str:
        return self.delimiter.join(str(c) for c in cells)

    def preamble(self, _type: type) -> list[str]:
        if _type is MetricsTable:
            headers = [f'{c}_{m}' for c in _COLUMNS for m in ('output', 'state', 'both')]
            return [self._row(['model', *headers])]
        if _type is ErrorDistribution:
            return [self._row(['model', *ERROR_CATEGORIES, 'unclassified'])]
        if _type is FunctionProfile:
            return [self._row(['function_id', 'C', 'D', 'F', 'L', 'score', 'level'])]
        if _type is CorpusSummary:
            return [self._row(['statistic', 'value'])]
        return []

    def _accuracy_cells(self, cells: dict[str, Accuracy]) -> list[str]:
        out = []
        for column in _COLUMNS:
            acc = cells[column]
            if not acc.n:
                out.extend(['-'] * 3)
            else:
                out.extend([_pct(acc.output), _pct(acc.state), _pct(acc.both)])
        return out

    def render_metrics(self, node: MetricsTable) -> str:
        return '\n'.join(
            [
                self._row([node.model, *self._accuracy_cells(node.functions)]),
                self._row([f'{node.model} [per-test]', *self._accuracy_cells(node.tests)]),
            ]
        )

    def render_errors(self, node: ErrorDistribution) -> str:
        percentages = node.percentages
        return self._row(
            [node.model, *(_pct(percentages[c]) for c in ERROR_CATEGORIES), node.unclassified]
        )

    def render_profile(self, node: FunctionProfile) -> str:
        r = node.report
        return self._row([node.function_id, r.C, r.D, r.F, r.L, f'{r.score:g}', node.label.level])

    def render_summary(self, node: CorpusSummary) -> str:
        rows = []
        for key, value in node.to_record().items():
            rows.append(self._row([key, f'{value:.2f}' if isinstance(value, float) else value]))
        return '\n'.join(rows)


class RecordsRenderer(Renderer):
    """One JSON object per result, tagged with its ``kind``."""

    _KINDS = {
        MetricsTable: 'metrics',
        ErrorDistribution: 'errors',
        FunctionProfile: 'profile',
        CorpusSummary: 'summary',
    }

    def _record(self, node: Renderable) -> str:
        record = {'kind': self._KINDS[type(node)], **node.to_record()}
        return json.dumps(record, sort_keys=True, ensure_ascii=False)

    render_metrics = render_errors = render_profile = render_summary = _record  # type: ignore


def renderer_for(fmt: str) -> Renderer:
    """The renderer for a ``--format`` value: ``table``, ``csv`` or ``records``."""
    if fmt == 'table':
        return TableRenderer()
    if fmt == 'csv':
        return TableRenderer(',')
    if fmt == 'records':
        return RecordsRenderer()
    raise ValueError(f'Unknown format {fmt!r}')
