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

from collections.abc import Iterable, Sequence
from typing import TYPE_CHECKING

from lark.lexer import Token


if TYPE_CHECKING:
    from .subset import SubsetViolation
    from .syntax import Span


__all__ = (
    'StepwiseError',
    'SourceSyntaxError',
    'DefinitionCountError',
    'SubsetError',
    'ExecutionFault',
    'LimitExceeded',
    'CorpusError',
    'ProviderError',
    'StageError',
    'HarnessError',
    'ConfigError',
)


class StepwiseError(Exception):
    """Base class for all stepwise errors."""

    def __init__(self, msg: str) -> None:
        super().__init__(msg)


class SourceSyntaxError(StepwiseError):
    """The function source could not be parsed."""

    def __init__(self, line: int, col: int, got: Token | str, expected: Iterable[str]) -> None:
        self.line = line
        self.col = col
        self.got = got
        self.expected = set(expected)
        expected_str = ', '.join(sorted(str(ex) for ex in self.expected))
        msg = f'Unexpected input on line {line}, col {col}: expected {expected_str}, got {got!r}'
        super().__init__(msg)


class DefinitionCountError(StepwiseError):
    """The source did not contain exactly one top-level function definition.

    Attributes
    ----------
    count: :class:`int`
        How many top-level definitions were found.
    extra: :class:`int`
        How many other top-level statements were found.
    """

    def __init__(self, count: int, extra: int = 0) -> None:
        self.count = count
        self.extra = extra
        msg = f'Expected exactly one top-level function definition, found {count}'
        if extra:
            msg += f' and {extra} other top-level statement(s)'
        super().__init__(msg)


class SubsetError(StepwiseError):
    """The tree uses constructs outside the supported language subset.

    Attributes
    ----------
    violations: Sequence[:class:`~stepwise.SubsetViolation`]
        Every violation found, in source order.
    """

    def __init__(self, violations: Sequence[SubsetViolation]) -> None:
        self.violations = tuple(violations)
        first = self.violations[0] if self.violations else None
        if first is None:
            msg = 'Unsupported construct'
        else:
            msg = f'{len(self.violations)} unsupported construct(s), first: {first}'
        super().__init__(msg)


class ExecutionFault(StepwiseError):
    """A runtime error raised by interpreted code.

    Attributes
    ----------
    kind: :class:`str`
        A machine-readable error kind, e.g. ``index-out-of-range``.
    span: Optional[:class:`~stepwise.syntax.Span`]
        Where the error happened, if known.
    """

    def __init__(self, kind: str, message: str, span: Span | None = None) -> None:
        self.kind = kind
        self.message = message
        self.span = span
        where = f' at line {span.line}, col {span.column}' if span is not None else ''
        super().__init__(f'{kind}: {message}{where}')


class LimitExceeded(StepwiseError):
    """An execution budget was exhausted."""

    def __init__(self, which: str) -> None:
        self.which = which
        super().__init__(f'Execution limit exceeded: {which}')


class CorpusError(StepwiseError):
    """A corpus file could not be read or a record is malformed."""

    def __init__(self, msg: str, *, path: str | None = None, line: int | None = None) -> None:
        self.path = path
        self.line = line
        if line is not None:
            msg = f'{path or "<corpus>"}:{line}: {msg}'
        super().__init__(msg)


class ProviderError(StepwiseError):
    """A chat or embedding provider call failed.

    Attributes
    ----------
    retriable: :class:`bool`
        Whether retrying the same request later may succeed.
    """

    def __init__(self, msg: str, *, retriable: bool = True) -> None:
        self.retriable = retriable
        super().__init__(msg)


class StageError(StepwiseError):
    """A pipeline stage gave up on a function."""

    def __init__(self, stage: str, function_id: str, reason: str) -> None:
        self.stage = stage
        self.function_id = function_id
        self.reason = reason
        super().__init__(f'{stage} failed for {function_id}: {reason}')


class HarnessError(StepwiseError):
    """The grading harness was asked to do something its contract forbids."""

    pass


class ConfigError(StepwiseError):
    """Invalid configuration."""

    pass
