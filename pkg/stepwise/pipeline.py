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

import json
import logging
import re
import threading
from collections.abc import Callable, Iterable, Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import IO, Any

from .config import PipelineConfig
from .corpus import (
    Corpus,
    EvolutionTurn,
    FilterPolicy,
    InstructionRecord,
    SeedFunction,
    TestCase,
    VerificationReport,
    drop_sparse,
    filter_tests,
)
from .errors import *
from .interpreter import ExecutionResult, Interpreter, Limits
from .metrics import measure
from .providers import ChatParams, ChatProvider
from .subset import require_subset
from .syntax import SyntaxTree, parse
from .utils import structurally_equal
from .values import MISSING, equivalent


__all__ = (
    'STAGES',
    'DEFAULT_STAGES',
    'DISCARD_REASONS',
    'EventLog',
    'LabelResult',
    'Pipeline',
    'extract_json',
    'anonymize_and_instrument',
    'evolve',
    'generate_instruction',
    'verify_and_refine',
    'gold_label',
    'parse_stages',
)

log = logging.getLogger(__name__)

#: Every stage, in the order they run.
STAGES = ('anonymize', 'evolve', 'describe', 'verify', 'label', 'filter')

DEFAULT_STAGES = ('anonymize', 'evolve', 'describe', 'verify', 'label')

DISCARD_REASONS = (
    'incomplete-after-budget',
    'provider-failure',
    'malformed-verification',
    'regeneration-failed',
)

_DONE = frozenset({'done', 'skipped'})


def parse_stages(text: str) -> tuple[str, ...]:
    """Parses a comma separated stage list into run order.

    Raises
    ------
    :class:`~stepwise.ConfigError`
        A name is not a stage.
    """
    names = [s.strip() for s in text.split(',') if s.strip()]
    unknown = [s for s in names if s not in STAGES]
    if unknown:
        raise ConfigError(
            f'Unknown stage(s): {", ".join(unknown)}; choose from {", ".join(STAGES)}'
        )
    return tuple(s for s in STAGES if s in names)


class EventLog:
    """Writes stage events as JSON lines through one locked writer.

    Events are also logged at DEBUG. Without a path nothing is written.
    """

    def __init__(self, path: str | Path | None = None) -> None:
        self._lock = threading.Lock()
        self._out: IO[str] | None = open(path, 'a', encoding='utf-8') if path is not None else None
        self.events: list[dict[str, Any]] = []

    def emit(self, stage: str, function_id: str, turn: int, outcome: str, detail: str = '') -> None:
        event = {
            'stage': stage,
            'function_id': function_id,
            'turn': turn,
            'outcome': outcome,
            'detail': detail,
        }
        log.debug('%s %s turn %d: %s %s', stage, function_id, turn, outcome, detail)
        with self._lock:
            self.events.append(event)
            if self._out is not None:
                self._out.write(json.dumps(event, sort_keys=True, ensure_ascii=False) + '\n')
                self._out.flush()

    def close(self) -> None:
        with self._lock:
            if self._out is not None:
                self._out.close()
                self._out = None

    def __enter__(self) -> EventLog:
        return self

    def __exit__(self, *exc_info: Any) -> None:
        self.close()


_FENCE = re.compile(r'```(?:json)?\s*\n(.*?)\n\s*```', re.DOTALL)


def extract_json(text: str) -> dict[str, Any]:
    """Finds the JSON object in a model reply.

    A fenced ```json block wins; otherwise the text from the first ``{`` to the
    last ``}`` is tried.

    Raises
    ------
    ValueError
        No JSON object could be found.
    """
    candidates = [m.group(1) for m in _FENCE.finditer(text)]
    start, end = text.find('{'), text.rfind('}')
    if start != -1 and end > start:
        candidates.append(text[start : end + 1])
    for candidate in candidates:
        try:
            obj = json.loads(candidate)
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict):
            return obj
    raise ValueError('no JSON object in the reply')


class _Rejected(Exception):
    """A candidate reply failed a check; the stage may retry."""


def _field(obj: Mapping[str, Any], key: str, kind: type) -> Any:
    value = obj.get(key)
    if not isinstance(value, kind):
        raise _Rejected(f'reply field {key!r} is missing or not a {kind.__name__}')
    return value


def _stats_keys(obj: Mapping[str, Any]) -> list[str]:
    keys = _field(obj, 'stats_keys', list)
    if not all(isinstance(k, str) and k for k in keys):
        raise _Rejected('stats_keys must be non-empty strings')
    if not 1 <= len(keys) <= 3 or len(set(keys)) != len(keys):
        raise _Rejected(f'expected 1 to 3 distinct stats keys, got {keys}')
    return keys


def _candidate_tree(source: str, arity: int) -> SyntaxTree:
    try:
        tree = parse(source)
        require_subset(tree)
    except StepwiseError as e:
        raise _Rejected(f'candidate does not validate: {e}') from None
    if tree.name != 'f':
        raise _Rejected(f'candidate is named {tree.name!r}, not f')
    if len(tree.root.params) != arity:
        raise _Rejected(f'candidate takes {len(tree.root.params)} argument(s), expected {arity}')
    return tree


def _check_pairs(
    tree: SyntaxTree,
    keys: Sequence[str],
    tests: Sequence[TestCase],
    interpreter: Interpreter,
    limits: Limits | None,
) -> list[ExecutionResult]:
    results = interpreter.run_suite(tree, tests, limits)
    for test, result in zip(tests, results):
        if result.error_kind == 'malformed-return':
            raise _Rejected(f'candidate does not return an (output, stats) pair on test {test.id}')
        if result.ok and set(result.stats) != set(keys):
            raise _Rejected(
                f'candidate reports stats {sorted(result.stats)} but declared {sorted(keys)}'
            )
    return results


class _Stage:
    """Shared plumbing for one stage call on one function: prompting and retries."""

    def __init__(
        self,
        name: str,
        fn: SeedFunction,
        llm: ChatProvider,
        config: PipelineConfig,
        events: EventLog | None,
        turn: int = 1,
    ) -> None:
        self.name = name
        self.fn = fn
        self.llm = llm
        self.config = config
        self.events = events or EventLog()
        self.turn = turn
        self.params = ChatParams(config.temperature, config.max_tokens)
        self.provider_failed = False

    def emit(self, outcome: str, detail: str = '') -> None:
        self.events.emit(self.name, self.fn.id, self.turn, outcome, detail)

    def attempt(self, prompt: str, check: Callable[[dict[str, Any]], Any]) -> Any:
        """Asks until ``check`` accepts a reply, up to the retry budget.

        Raises
        ------
        :class:`~stepwise.StageError`
            Every attempt failed.
        """
        last = 'no attempt made'
        for attempt in range(1, self.config.max_retries + 1):
            try:
                reply = self.llm.send(
                    [('user', prompt)], self.params, tag=f'{self.name}:{self.fn.id}'
                )
            except ProviderError as e:
                self.provider_failed = True
                last = f'provider-failure: {e}'
                self.emit('provider-error', str(e))
                if not e.retriable:
                    break
                continue
            self.provider_failed = False
            try:
                obj = extract_json(reply)
            except ValueError as e:
                last = str(e)
                self.emit('malformed', last)
                continue
            try:
                return check(obj)
            except _Rejected as e:
                last = str(e)
                log.info(
                    '%s rejected a %s candidate (attempt %d): %s',
                    self.fn.id,
                    self.name,
                    attempt,
                    last,
                )
                self.emit('rejected', last)
        self.emit('failed', last)
        raise StageError(self.name, self.fn.id, last)


# ==== stages ====


def anonymize_and_instrument(
    fn: SeedFunction,
    llm: ChatProvider,
    tests: Sequence[TestCase] = (),
    *,
    config: PipelineConfig | None = None,
    interpreter: Interpreter | None = None,
    limits: Limits | None = None,
    events: EventLog | None = None,
) -> SeedFunction:
    """Asks for an anonymized copy of the function that also reports state trackers.

    The candidate must validate, be named ``f``, keep the arity, declare one to
    three trackers, and agree with the original function's output on every test
    where the original runs cleanly.

    Raises
    ------
    :class:`~stepwise.StageError`
        No acceptable candidate within the retry budget.
    """
    config = config or PipelineConfig()
    interpreter = interpreter or Interpreter()
    events = events or EventLog()
    original = fn.original_tree
    arity = len(original.root.params)

    # MISSING marks tests the original cannot run, which the check ignores
    expected: list[Any] = [MISSING] * len(tests)
    try:
        require_subset(original)
    except SubsetError as e:
        log.warning(
            '%s: the original cannot be executed, skipping the behavioral check: %s', fn.id, e
        )
        events.emit('anonymize', fn.id, 0, 'unchecked', str(e))
    else:
        for i, test in enumerate(tests):
            ran = interpreter.execute(
                original, test.args, limits, validate=False, expect_pair=False
            )
            if ran.ok:
                expected[i] = ran.output

    def check(obj: dict[str, Any]) -> SeedFunction:
        source = _field(obj, 'function', str)
        keys = _stats_keys(obj)
        tree = _candidate_tree(source, arity)
        results = _check_pairs(tree, keys, tests, interpreter, limits)
        for test, want, got in zip(tests, expected, results):
            if want is MISSING:
                continue
            if not got.ok:
                raise _Rejected(f'candidate fails on test {test.id}: {got.error_kind}')
            if not equivalent(want, got.output):
                raise _Rejected(f'candidate output differs from the original on test {test.id}')
        return replace(
            fn,
            anonymized_source=source,
            stats_keys=keys,
            stages={**fn.stages, 'anonymize': 'done'},
        )

    stage = _Stage('anonymize', fn, llm, config, events)
    result = stage.attempt(config.template('anonymize').format(function=fn.source), check)
    stage.emit('accepted', ', '.join(result.stats_keys))
    return result


def evolve(
    fn: SeedFunction,
    llm: ChatProvider,
    config: PipelineConfig | None = None,
    tests: Sequence[TestCase] = (),
    *,
    interpreter: Interpreter | None = None,
    limits: Limits | None = None,
    events: EventLog | None = None,
) -> SeedFunction:
    """Applies ``config.evolution_turns`` rounds of making the function more complex.

    A candidate must validate, keep the arity, return a pair on every test and
    score at least as high as the current function. A turn with no acceptable
    candidate is recorded as skipped and leaves the function as it was.
    """
    config = config or PipelineConfig()
    interpreter = interpreter or Interpreter()
    if fn.anonymized_source is None:
        raise StageError('evolve', fn.id, 'the function has not been anonymized')

    current = fn
    for turn in range(1, config.evolution_turns + 1):
        tree = current.tree
        before = measure(tree).score
        arity = len(tree.root.params)

        def check(obj: dict[str, Any]) -> tuple[str, SyntaxTree, list[str], str, float]:
            source = _field(obj, 'evolved_function', str)
            candidate = _candidate_tree(source, arity)
            keys = _stats_keys(obj)
            description = obj.get('evolution_description', '')
            _check_pairs(candidate, keys, tests, interpreter, limits)
            after = measure(candidate).score
            if after < before:
                raise _Rejected(f'complexity dropped from {before} to {after}')
            return source, candidate, keys, str(description), after

        stage = _Stage('evolve', current, llm, config, events, turn)
        prompt = config.template('evolve').format(original_function=current.anonymized_source)
        try:
            source, candidate, keys, description, after = stage.attempt(prompt, check)
        except StageError as e:
            history = [*current.evolution, EvolutionTurn(turn, 'skipped', before, None, e.reason)]
            current = replace(current, evolution=history)
            continue
        outcome = 'no-op' if structurally_equal(candidate.root, tree.root) else 'accepted'
        stage.emit(outcome, f'{before} -> {after}')
        current = replace(
            current,
            anonymized_source=source,
            stats_keys=keys,
            evolution=[
                *current.evolution,
                EvolutionTurn(turn, outcome, before, after, description),
            ],
        )

    skipped = all(t.outcome == 'skipped' for t in current.evolution[len(fn.evolution) :])
    return replace(current, stages={**current.stages, 'evolve': 'skipped' if skipped else 'done'})


_SECTIONS = ('inputs', 'logics', 'outputs')


def _refinement_prompt(base: str, missing_aspects: Sequence[str]) -> str:
    if not missing_aspects:
        return base
    bullets = '\n'.join(f'- {aspect}' for aspect in missing_aspects)
    return (
        f'{base}\n\n'
        'A previous version of these instructions was reviewed and found incomplete. '
        'Make sure the new instructions also cover:\n'
        f'{bullets}'
    )


def generate_instruction(
    fn: SeedFunction,
    llm: ChatProvider,
    config: PipelineConfig | None = None,
    *,
    missing_aspects: Sequence[str] = (),
    turn: int = 1,
    events: EventLog | None = None,
) -> InstructionRecord:
    """Asks for a conversational INPUTS / LOGICS / OUTPUTS description.

    ``missing_aspects`` from a failed verification are appended to the request.

    Raises
    ------
    :class:`~stepwise.StageError`
        No reply with three non-empty sections within the retry budget.
    """
    config = config or PipelineConfig()
    if fn.anonymized_source is None or fn.stats_keys is None:
        raise StageError('describe', fn.id, 'the function has not been anonymized')

    def check(obj: dict[str, Any]) -> InstructionRecord:
        sections = [_field(obj, name, str).strip() for name in _SECTIONS]
        empty = [name for name, text in zip(_SECTIONS, sections) if not text]
        if empty:
            raise _Rejected(f'empty section(s): {", ".join(empty)}')
        return InstructionRecord(fn.id, *sections)

    stage = _Stage('describe', fn, llm, config, events, turn)
    base = config.template('describe').format(function=fn.anonymized_source)
    record = stage.attempt(_refinement_prompt(base, missing_aspects), check)
    stage.emit('accepted')
    return record


def _coverage(value: Any) -> float:
    if isinstance(value, bool):
        raise _Rejected('coverage_percentage is not a number')
    if isinstance(value, str):
        match = re.search(r'-?\d+(?:\.\d+)?', value)
        if match is None:
            raise _Rejected(f'coverage_percentage {value!r} is not a number')
        value = float(match.group())
    if not isinstance(value, (int, float)) or not 0 <= value <= 100:
        raise _Rejected(f'coverage_percentage {value!r} is outside 0-100')
    return float(value)


def _complete(value: Any) -> bool:
    if isinstance(value, bool):
        return value
    if isinstance(value, str) and value.strip().lower() in ('true', 'false'):
        return value.strip().lower() == 'true'
    raise _Rejected('desc_is_complete is not a boolean')


def _report(obj: dict[str, Any]) -> VerificationReport:
    complete = _complete(obj.get('desc_is_complete'))
    missing = obj.get('missing_aspects', [])
    if not isinstance(missing, list) or not all(isinstance(m, str) for m in missing):
        raise _Rejected('missing_aspects is not a list of strings')
    return VerificationReport(
        desc_is_complete=complete,
        reasoning=str(obj.get('reasoning', '')),
        missing_aspects=[] if complete else missing,
        coverage_percentage=_coverage(obj.get('coverage_percentage', 100 if complete else 0)),
    )


def verify_and_refine(
    fn: SeedFunction,
    record: InstructionRecord,
    llm: ChatProvider,
    config: PipelineConfig | None = None,
    *,
    events: EventLog | None = None,
) -> InstructionRecord:
    """Verifies an instruction against the code, regenerating it until it is complete.

    At most ``config.verification_turns`` verifications run, with a regeneration
    between consecutive ones. The returned record is ``verified`` or ``discarded``
    and carries every verification report.
    """
    config = config or PipelineConfig()
    events = events or EventLog()
    history: list[VerificationReport] = []
    current = record

    def discard(reason: str) -> InstructionRecord:
        events.emit('verify', fn.id, len(history), 'discarded', reason)
        return replace(
            current, verification_history=history, status='discarded', discard_reason=reason
        )

    for turn in range(1, config.verification_turns + 1):
        stage = _Stage('verify', fn, llm, config, events, turn)
        prompt = config.template('verify').format(
            function_code=fn.anonymized_source, description=current.text
        )
        try:
            report = stage.attempt(prompt, _report)
        except StageError:
            reason = 'provider-failure' if stage.provider_failed else 'malformed-verification'
            return discard(reason)
        history.append(report)
        if report.desc_is_complete:
            stage.emit('verified', f'{report.coverage_percentage:g}%')
            return replace(
                current, verification_history=history, status='verified', discard_reason=None
            )
        stage.emit('incomplete', '; '.join(report.missing_aspects))
        if turn == config.verification_turns:
            break
        try:
            current = generate_instruction(
                fn,
                llm,
                config,
                missing_aspects=report.missing_aspects,
                turn=turn + 1,
                events=events,
            )
        except StageError:
            return discard('regeneration-failed')
    return discard('incomplete-after-budget')


@dataclass(frozen=True)
class LabelResult:
    """Tests with gold labels, and the ones that could not be labelled.

    Attributes
    ----------
    labelled: List[:class:`~stepwise.TestCase`]
        Tests whose execution succeeded, in input order
    dropped: Dict[:class:`str`, :class:`str`]
        Test id to the failed status (``runtime_error`` or ``limit_exceeded``)
    results: List[:class:`~stepwise.ExecutionResult`]
        One execution result per input test
    """

    labelled: list[TestCase]
    dropped: dict[str, str] = field(default_factory=dict)
    results: list[ExecutionResult] = field(default_factory=list)


def gold_label(
    fn: SeedFunction,
    tests: Sequence[TestCase],
    limits: Limits | None = None,
    *,
    interpreter: Interpreter | None = None,
    jobs: int = 1,
) -> LabelResult:
    """Labels tests by executing the anonymized function on them."""
    interpreter = interpreter or Interpreter()
    if fn.anonymized_source is None:
        raise StageError('label', fn.id, 'the function has not been anonymized')
    results = interpreter.run_suite(fn.tree, tests, limits, jobs=jobs)
    labelled: list[TestCase] = []
    dropped: dict[str, str] = {}
    for test, result in zip(tests, results):
        if result.ok:
            labelled.append(test.with_gold(result.output, result.stats))
        else:
            dropped[test.id] = result.status.value
            log.info('cannot label %s/%s: %s', fn.id, test.id, result)
    return LabelResult(labelled, dropped, results)


# ==== orchestration ====


@dataclass
class _Work:
    fn: SeedFunction
    tests: list[TestCase]
    instruction: InstructionRecord | None


class Pipeline:
    """Runs the stages over a corpus, skipping work a previous run completed.

    Each function's stages run in order; functions run concurrently up to
    ``config.jobs``. Finished work is merged back in corpus order, so the output
    does not depend on scheduling.
    """

    def __init__(
        self,
        llm: ChatProvider,
        config: PipelineConfig | None = None,
        *,
        limits: Limits | None = None,
        policy: FilterPolicy | None = None,
        events: EventLog | None = None,
        interpreter: Interpreter | None = None,
    ) -> None:
        self.llm = llm
        self.config = config or PipelineConfig()
        self.limits = limits or Limits()
        self.policy = policy or FilterPolicy()
        self.events = events or EventLog()
        self.interpreter = interpreter or Interpreter(self.limits)

    def run(self, corpus: Corpus, stages: Iterable[str] = DEFAULT_STAGES) -> Corpus:
        """Returns a new corpus with the requested stages applied."""
        wanted = tuple(s for s in STAGES if s in set(stages))
        work = [
            _Work(fn, corpus.tests_for(fid), corpus.instruction_for(fid))
            for fid, fn in corpus.functions.items()
        ]

        if self.config.jobs > 1 and len(work) > 1:
            with ThreadPoolExecutor(max_workers=self.config.jobs) as pool:
                done = list(pool.map(lambda w: self._process(w, wanted), work))
        else:
            done = [self._process(w, wanted) for w in work]

        out = Corpus()
        for item in done:
            out.add(item.fn)
            for test in item.tests:
                out.add(test)
        for item in done:
            if item.instruction is not None:
                out.add(item.instruction)
        for record in corpus.evals.values():
            out.add(record)
        if 'filter' in wanted:
            out = drop_sparse(out, self.policy)
        return out

    def _process(self, work: _Work, stages: tuple[str, ...]) -> _Work:
        for stage in stages:
            if work.fn.stages.get(stage) in _DONE:
                continue
            try:
                getattr(self, f'_run_{stage}')(work)
            except StageError as e:
                log.warning('%s', e)
                work.fn = replace(work.fn, stages={**work.fn.stages, stage: 'failed'})
                break
        return work

    def _mark(self, work: _Work, stage: str, status: str = 'done') -> None:
        work.fn = replace(work.fn, stages={**work.fn.stages, stage: status})

    def _run_anonymize(self, work: _Work) -> None:
        work.fn = anonymize_and_instrument(
            work.fn,
            self.llm,
            work.tests,
            config=self.config,
            interpreter=self.interpreter,
            limits=self.limits,
            events=self.events,
        )

    def _run_evolve(self, work: _Work) -> None:
        work.fn = evolve(
            work.fn,
            self.llm,
            self.config,
            work.tests,
            interpreter=self.interpreter,
            limits=self.limits,
            events=self.events,
        )

    def _run_describe(self, work: _Work) -> None:
        work.instruction = generate_instruction(work.fn, self.llm, self.config, events=self.events)
        self._mark(work, 'describe')

    def _run_verify(self, work: _Work) -> None:
        if work.instruction is None:
            raise StageError('verify', work.fn.id, 'there is no instruction to verify')
        if work.instruction.status == 'unverified':
            work.instruction = verify_and_refine(
                work.fn, work.instruction, self.llm, self.config, events=self.events
            )
        self._mark(work, 'verify')

    def _run_label(self, work: _Work) -> None:
        result = gold_label(work.fn, work.tests, self.limits, interpreter=self.interpreter)
        for test_id, reason in result.dropped.items():
            self.events.emit('label', work.fn.id, 1, 'dropped', f'{test_id}: {reason}')
        work.tests = result.labelled
        self._mark(work, 'label')

    def _run_filter(self, work: _Work) -> None:
        results = self.interpreter.run_suite(work.fn.tree, work.tests, self.limits)
        verdict = filter_tests(work.fn, work.tests, results, self.policy)
        for test_id, reason in verdict.removed.items():
            self.events.emit('filter', work.fn.id, 1, 'dropped', f'{test_id}: {reason}')
        kept = set(verdict.kept)
        work.tests = [t for t in work.tests if t.id in kept]
        self._mark(work, 'filter')
