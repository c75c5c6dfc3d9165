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

import functools
import logging
import random
import re
from collections import Counter
from collections.abc import Iterable, Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Any

import jinja2

from . import syntax as ast
from .config import PROMPTS, HarnessConfig
from .corpus import (
    ERROR_CATEGORIES,
    UNCLASSIFIED,
    Corpus,
    EvalRecord,
    InstructionRecord,
    SeedFunction,
    TestCase,
)
from .errors import HarnessError, ProviderError, SourceSyntaxError
from .metrics import LEVELS, DifficultyLabel
from .pipeline import extract_json
from .providers import ChatParams, ChatProvider
from .values import MISSING, InsertionSet, equivalent, render_literal


__all__ = (
    'ERROR_DEFINITIONS',
    'OVERALL',
    'Accuracy',
    'MetricsTable',
    'ErrorDistribution',
    'build_task_prompt',
    'render_answer',
    'parse_literal',
    'parse_response',
    'compare',
    'grade',
    'evaluate',
    'aggregate',
    'error_distribution',
    'apportion',
    'sample_mini',
    'build_judge_prompt',
    'classify_error',
)

log = logging.getLogger(__name__)

#: What each failure category means, as shown to the judge.
ERROR_DEFINITIONS: dict[str, str] = {
    'Control Flow Misexecution': (
        'incorrect, incomplete, or inconsistent execution of core control structures '
        '(e.g., loops, branches, function calls), including wrong iteration counts, '
        'improper branching, or mishandled recursion/returns.'
    ),
    'State Tracking Errors': (
        'failure to correctly maintain or update internal variables or data structures, '
        'such as counters, flags, arrays, stacks, or accumulated values.'
    ),
    'Missing Logic Elements': (
        'omission of required components (e.g., loops, branches, edge case handling or '
        'initialization).'
    ),
    'Misordered Execution': (
        'performing steps in the wrong sequence, such as using uninitialized variables, '
        'premature function calls, or out-of-order updates.'
    ),
    'Instruction Misinterpretation': (
        'misunderstanding the instruction’s intent, leading to hallucinated steps, '
        'misapplied patterns, or ignored constraints.'
    ),
}

#: The key of the all-levels cell in a :class:`MetricsTable`.
OVERALL = 'overall'


@functools.lru_cache(maxsize=None)
def _environment() -> jinja2.Environment:
    return jinja2.Environment(
        loader=jinja2.FileSystemLoader(str(PROMPTS)),
        autoescape=False,
        undefined=jinja2.StrictUndefined,
    )


def _arguments(args: Sequence[Any]) -> str:
    return f'Arguments: {render_literal(tuple(args))}'


# ==== prompts and answers ====


def build_task_prompt(
    record: InstructionRecord, test: TestCase, config: HarnessConfig | None = None
) -> str:
    """The prompt asking a model to follow an instruction on one input.

    Only the instruction text and the input appear; the function itself never does.

    Raises
    ------
    :class:`~stepwise.HarnessError`
        The instruction is not verified.
    """
    if not record.verified:
        raise HarnessError(
            f'The instruction for {record.function_id} is {record.status}, not verified'
        )
    return _environment().get_template('task.md.j2').render(
        inputs=record.inputs_section,
        logics=record.logics_section,
        outputs=record.outputs_section,
        arguments=_arguments(test.args),
    )


def render_answer(output: Any, stats: Mapping[str, Any]) -> str:
    """An answer in the format the task prompt asks for."""
    return f'Output: {render_literal(output)}\nStatistics: {render_literal(dict(stats))}'


_NAMED_FLOATS = {'nan': float('nan'), 'inf': float('inf')}


def _literal(node: ast.Expression) -> Any:
    if isinstance(node, ast.Constant):
        return node.value
    if isinstance(node, ast.UnaryOp) and node.op in ('-', '+'):
        value = _literal(node.operand)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValueError(f'cannot negate {value!r}')
        return -value if node.op == '-' else value
    if isinstance(node, ast.TupleDisplay):
        return tuple(_literal(e) for e in node.elts)
    if isinstance(node, ast.ListDisplay):
        return [_literal(e) for e in node.elts]
    if isinstance(node, ast.SetDisplay):
        return InsertionSet(_literal(e) for e in node.elts)
    if isinstance(node, ast.DictDisplay):
        out = {}
        for item in node.items:
            if not isinstance(item, ast.KeyValue):
                raise ValueError('unpacking is not a literal')
            key = _literal(item.key)
            out[tuple(key) if isinstance(key, list) else key] = _literal(item.value)
        return out
    if isinstance(node, ast.Name) and node.id in _NAMED_FLOATS:
        return _NAMED_FLOATS[node.id]
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id == 'set':
        if not node.args and not node.keywords:
            return InsertionSet()
    raise ValueError(f'{node} is not a literal')


def parse_literal(text: str) -> Any:
    """Reads a literal of the corpus language.

    Raises
    ------
    ValueError
        The text is not a literal.
    """
    try:
        node = ast.parse_expression(text)
    except SourceSyntaxError as e:
        raise ValueError(str(e)) from None
    return _literal(node)


_OUTPUT = re.compile(r'^[ \t>*_`#-]*Output[*_`]*[ \t]*:[*_`]*[ \t]*', re.MULTILINE | re.IGNORECASE)
_STATISTICS = re.compile(r'\b(?:Statistics|Stats)[*_`]*[ \t]*:', re.IGNORECASE)
_FENCE = re.compile(r'^\s*```[\w+-]*[ \t]*\n')
_CLOSERS = {'(': ')', '[': ']', '{': '}'}


def _balanced(text: str, start: int) -> str | None:
    """The bracketed chunk opening at ``text[start]``, skipping quoted strings."""
    stack: list[str] = []
    quote: str | None = None
    escaped = False
    for i in range(start, len(text)):
        ch = text[i]
        if quote is not None:
            if escaped:
                escaped = False
            elif ch == '\\':
                escaped = True
            elif ch == quote:
                quote = None
        elif ch in '\'"':
            quote = ch
        elif ch in _CLOSERS:
            stack.append(_CLOSERS[ch])
        elif stack and ch == stack[-1]:
            stack.pop()
            if not stack:
                return text[start : i + 1]
        elif ch in ')]}':
            return None
    return None


def _strip_markup(text: str) -> str:
    return text.strip().strip('`*_').strip().rstrip('.').strip()


def _read_literal(text: str) -> Any:
    """:func:`parse_literal`, retried once with inline code marks removed."""
    try:
        return parse_literal(text)
    except ValueError:
        if '`' not in text:
            raise
    return parse_literal(text.replace('`', ''))


def _output_value(rest: str) -> Any:
    rest = _FENCE.sub('', rest, count=1).lstrip('`* \t\r\n')
    if rest[:1] in _CLOSERS:
        chunk = _balanced(rest, 0)
        if chunk is not None:
            try:
                return _read_literal(chunk)
            except ValueError:
                pass
    line = _strip_markup(rest.split('\n', 1)[0])
    # answers sometimes put both results on one line
    line = re.split(r'[,;]?\s*\**(?:Statistics|Stats)\b', line, maxsplit=1, flags=re.IGNORECASE)[0]
    try:
        return _read_literal(_strip_markup(line))
    except ValueError:
        return MISSING


def parse_response(text: str) -> tuple[Any, dict[str, Any] | None]:
    """Reads the final answer from a model response.

    The last ``Output:`` line gives the output and the first mapping after the last
    ``Statistics:`` marker gives the statistics.

    Returns
    -------
    Tuple[Any, Optional[Dict[:class:`str`, Any]]]
        The output, :data:`~stepwise.values.MISSING` when absent or unreadable, and
        the statistics, ``None`` when absent or unreadable.
    """
    output: Any = MISSING
    outputs = list(_OUTPUT.finditer(text))
    if outputs:
        output = _output_value(text[outputs[-1].end() :])

    stats: dict[str, Any] | None = None
    markers = list(_STATISTICS.finditer(text))
    if markers:
        start = text.find('{', markers[-1].end())
        chunk = _balanced(text, start) if start != -1 else None
        if chunk is not None:
            try:
                value = _read_literal(chunk)
            except ValueError:
                value = None
            if isinstance(value, dict) and all(isinstance(k, str) for k in value):
                stats = value
    return output, stats


def compare(
    output: Any,
    stats: Mapping[str, Any] | None,
    test: TestCase,
    config: HarnessConfig | None = None,
) -> tuple[bool, bool]:
    """Grades a parsed answer against a test's gold labels.

    Returns
    -------
    Tuple[:class:`bool`, :class:`bool`]
        Whether the output matches, and whether the statistics match. The
        statistics must have exactly the gold key set.

    Raises
    ------
    :class:`~stepwise.HarnessError`
        The test has no gold labels.
    """
    if not test.labelled:
        raise HarnessError(f'Test {test.function_id}/{test.id} has no gold labels')
    assert test.gold_stats is not None
    rel_tol = (config or HarnessConfig()).rel_tol
    output_match = output is not MISSING and equivalent(output, test.gold_output, rel_tol=rel_tol)
    state_match = (
        stats is not None
        and set(stats) == set(test.gold_stats)
        and all(equivalent(stats[k], v, rel_tol=rel_tol) for k, v in test.gold_stats.items())
    )
    return output_match, state_match


def grade(
    test: TestCase, response: str, model: str = 'unknown', config: HarnessConfig | None = None
) -> EvalRecord:
    """Parses and grades one response."""
    output, stats = parse_response(response)
    output_match, state_match = compare(output, stats, test, config)
    return EvalRecord(
        function_id=test.function_id,
        test_id=test.id,
        raw_response=response,
        model=model,
        parsed_output=output,
        parsed_stats=stats,
        output_match=output_match,
        state_match=state_match,
    )


def _gradable(corpus: Corpus) -> list[tuple[InstructionRecord, TestCase]]:
    pairs = []
    for fid in corpus.functions:
        record = corpus.instruction_for(fid)
        if record is None or not record.verified:
            continue
        pairs.extend((record, t) for t in corpus.tests_for(fid) if t.labelled)
    return pairs


def evaluate(
    corpus: Corpus, llm: ChatProvider, config: HarnessConfig | None = None, *, jobs: int = 1
) -> list[EvalRecord]:
    """Asks a model to follow every verified instruction on its labelled tests.

    Tests are graded in corpus order. A provider failure on one test is recorded
    as an empty, failing response.
    """
    config = config or HarnessConfig()
    params = ChatParams(config.temperature, config.max_output_tokens)

    def ask(pair: tuple[InstructionRecord, TestCase]) -> EvalRecord:
        record, test = pair
        prompt = build_task_prompt(record, test, config)
        try:
            response = llm.send(
                [('user', prompt)], params, tag=f'eval:{test.function_id}/{test.id}'
            )
        except ProviderError as e:
            log.error('no response for %s/%s: %s', test.function_id, test.id, e)
            response = ''
        return grade(test, response, llm.model, config)

    pairs = _gradable(corpus)
    if jobs <= 1 or len(pairs) <= 1:
        return [ask(p) for p in pairs]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(ask, pairs))


# ==== aggregation ====


@dataclass(frozen=True)
class Accuracy:
    """Percentages over ``n`` graded units (functions or tests)."""

    output: float
    state: float
    both: float
    n: int

    @classmethod
    def of(cls, units: Sequence[tuple[bool, bool]]) -> Accuracy:
        n = len(units)
        if not n:
            return cls(0.0, 0.0, 0.0, 0)
        return cls(
            100.0 * sum(o for o, _ in units) / n,
            100.0 * sum(s for _, s in units) / n,
            100.0 * sum(o and s for o, s in units) / n,
            n,
        )

    def to_record(self) -> dict[str, Any]:
        return {'output': self.output, 'state': self.state, 'both': self.both, 'n': self.n}


@dataclass(frozen=True)
class MetricsTable:
    """Accuracy by difficulty level for one model.

    Attributes
    ----------
    model: :class:`str`
        The graded model
    functions: Dict[:class:`str`, :class:`Accuracy`]
        Level (and :data:`OVERALL`) to function-level accuracy: a function counts
        only if all of its tests pass
    tests: Dict[:class:`str`, :class:`Accuracy`]
        Level (and :data:`OVERALL`) to per-test accuracy
    """

    model: str
    functions: dict[str, Accuracy]
    tests: dict[str, Accuracy]

    def to_record(self) -> dict[str, Any]:
        return {
            'model': self.model,
            'functions': {k: v.to_record() for k, v in self.functions.items()},
            'tests': {k: v.to_record() for k, v in self.tests.items()},
        }


def aggregate(
    records: Iterable[EvalRecord],
    labels: Mapping[str, DifficultyLabel | str],
    *,
    model: str | None = None,
) -> MetricsTable:
    """Scores one model's graded records by difficulty.

    Raises
    ------
    :class:`~stepwise.HarnessError`
        A record refers to a function without a difficulty label, or the records
        come from more than one model.
    """
    by_function: dict[str, list[tuple[bool, bool]]] = {}
    models: set[str] = set()
    for record in records:
        if record.function_id not in labels:
            raise HarnessError(f'Function {record.function_id} has no difficulty label')
        models.add(record.model)
        outcome = (record.output_match, record.state_match)
        by_function.setdefault(record.function_id, []).append(outcome)
    if len(models) > 1:
        raise HarnessError(f'Records from several models: {", ".join(sorted(models))}')

    level_of = {fid: str(labels[fid]) for fid in by_function}
    functions: dict[str, Accuracy] = {}
    tests: dict[str, Accuracy] = {}
    for level in (*LEVELS, OVERALL):
        fids = [fid for fid in by_function if level in (OVERALL, level_of[fid])]
        functions[level] = Accuracy.of(
            [(all(o for o, _ in by_function[f]), all(s for _, s in by_function[f])) for f in fids]
        )
        tests[level] = Accuracy.of([unit for f in fids for unit in by_function[f]])
    return MetricsTable(model or (models.pop() if models else 'unknown'), functions, tests)


@dataclass(frozen=True)
class ErrorDistribution:
    """How one model's classified failures split over the categories.

    ``unclassified`` failures are counted but not part of the percentages.
    """

    model: str
    counts: dict[str, int]
    unclassified: int = 0
    pending: int = 0

    @property
    def classified(self) -> int:
        return sum(self.counts.values())

    @property
    def percentages(self) -> dict[str, float]:
        total = self.classified
        return {c: 100.0 * n / total if total else 0.0 for c, n in self.counts.items()}

    def to_record(self) -> dict[str, Any]:
        return {
            'model': self.model,
            'counts': dict(self.counts),
            'percentages': self.percentages,
            'unclassified': self.unclassified,
            'pending': self.pending,
        }


def error_distribution(
    records: Iterable[EvalRecord], model: str | None = None
) -> ErrorDistribution:
    """Counts failure categories; failures with no category yet are ``pending``."""
    tally: Counter[str] = Counter()
    pending = 0
    seen: set[str] = set()
    for record in records:
        seen.add(record.model)
        if record.passed:
            continue
        if record.error_category is None:
            pending += 1
        else:
            tally[record.error_category] += 1
    counts = {c: tally[c] for c in ERROR_CATEGORIES}
    name = model or (min(seen) if seen else 'unknown')
    return ErrorDistribution(name, counts, tally[UNCLASSIFIED], pending)


# ==== mini benchmark ====


def apportion(sizes: Mapping[str, int], total: int) -> dict[str, int]:
    """Splits ``total`` proportionally to ``sizes`` by largest remainder.

    Ties in the remainder go to the earlier key.
    """
    population = sum(sizes.values())
    if population <= 0:
        raise HarnessError('Cannot apportion over an empty population')
    quotas = {k: Fraction(total * n, population) for k, n in sizes.items()}
    allocation = {k: int(q) for k, q in quotas.items()}
    order = list(sizes)
    leftover = total - sum(allocation.values())
    by_remainder = sorted(order, key=lambda k: (-(quotas[k] - allocation[k]), order.index(k)))
    for k in by_remainder[:leftover]:
        allocation[k] += 1
    return allocation


def sample_mini(
    labels: Mapping[str, DifficultyLabel | str], size: int | None = None, seed: int = 0
) -> list[str]:
    """Draws a difficulty-stratified sample of function ids.

    Each level gets a share proportional to its size and is sampled uniformly
    with a generator seeded by ``seed``.

    Returns
    -------
    List[:class:`str`]
        The sampled ids, sorted

    Raises
    ------
    :class:`~stepwise.HarnessError`
        ``size`` exceeds the number of labelled functions, or a level with a
        positive share has no functions.
    """
    size = HarnessConfig().mini_size if size is None else size
    if size <= 0:
        raise HarnessError(f'Sample size must be positive, not {size}')
    if size > len(labels):
        raise HarnessError(f'Cannot sample {size} of {len(labels)} functions')
    groups: dict[str, list[str]] = {level: [] for level in LEVELS}
    for fid, label in labels.items():
        groups[str(label)].append(fid)
    allocation = apportion({level: len(ids) for level, ids in groups.items()}, size)
    rng = random.Random(seed)
    chosen: list[str] = []
    for level in LEVELS:
        want = allocation[level]
        if want and not groups[level]:
            raise HarnessError(f'No {level} functions to sample {want} from')
        chosen.extend(rng.sample(sorted(groups[level]), want))
    log.debug('mini benchmark allocation %s', allocation)
    return sorted(chosen)


# ==== error classification ====


def _shown(value: Any) -> str:
    if value is MISSING or value is None:
        return '(not given)'
    return render_literal(value)


def build_judge_prompt(
    record: EvalRecord, fn: SeedFunction, instruction: InstructionRecord, test: TestCase
) -> str:
    return _environment().get_template('judge.md.j2').render(
        categories=ERROR_DEFINITIONS,
        code=fn.anonymized_source or fn.source,
        instruction=instruction.text,
        arguments=_arguments(test.args),
        gold_output=_shown(test.gold_output),
        gold_stats=_shown(test.gold_stats),
        parsed_output=_shown(record.parsed_output),
        parsed_stats=_shown(record.parsed_stats),
        response=record.raw_response,
    )


def _category(name: Any) -> str | None:
    if not isinstance(name, str):
        return None
    wanted = name.strip().strip('*').strip().lower().rstrip('s')
    for category in ERROR_CATEGORIES:
        if category.lower().rstrip('s') == wanted:
            return category
    return None


def classify_error(
    record: EvalRecord,
    fn: SeedFunction,
    instruction: InstructionRecord,
    test: TestCase,
    llm: ChatProvider,
    config: HarnessConfig | None = None,
) -> str:
    """Asks a judge model which kind of mistake a failed record shows.

    Returns
    -------
    :class:`str`
        One of :data:`~stepwise.ERROR_CATEGORIES`, or
        :data:`~stepwise.UNCLASSIFIED` when no usable verdict came back.

    Raises
    ------
    :class:`~stepwise.HarnessError`
        The record passed.
    """
    if record.passed:
        raise HarnessError(
            f'{record.function_id}/{record.test_id} passed; there is no error to classify'
        )
    config = config or HarnessConfig()
    prompt = build_judge_prompt(record, fn, instruction, test)
    params = ChatParams(config.temperature)
    for attempt in range(1, config.judge_retries + 1):
        try:
            reply = llm.send([('user', prompt)], params, tag=f'judge:{record.function_id}')
        except ProviderError as e:
            log.warning('judge call failed for %s/%s: %s', record.function_id, record.test_id, e)
            if not e.retriable:
                break
            continue
        try:
            verdict = _category(extract_json(reply).get('category'))
        except ValueError:
            verdict = None
        if verdict is not None:
            return verdict
        log.info(
            'unusable verdict for %s/%s (attempt %d)', record.function_id, record.test_id, attempt
        )
    return UNCLASSIFIED
