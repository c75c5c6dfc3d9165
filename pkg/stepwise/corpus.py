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
import os
import tempfile
from collections.abc import Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import TYPE_CHECKING, Any, ClassVar

import numpy as np

from .errors import ConfigError, CorpusError, ProviderError, StepwiseError
from .subset import require_subset
from .syntax import SyntaxTree, parse
from .values import MISSING, decimal_places, decode, encode, numeric_atoms


if TYPE_CHECKING:
    from .interpreter import ExecutionResult
    from .providers import EmbeddingProvider


__all__ = (
    'ERROR_CATEGORIES',
    'UNCLASSIFIED',
    'FilterPolicy',
    'SeedFunction',
    'EvolutionTurn',
    'TestCase',
    'VerificationReport',
    'InstructionRecord',
    'EvalRecord',
    'TestFilterResult',
    'Corpus',
    'load',
    'save',
    'read_records',
    'write_records',
    'filter_tests',
    'drop_sparse',
    'dedup',
)

log = logging.getLogger(__name__)

#: The five failure categories, in reporting order.
ERROR_CATEGORIES = (
    'Control Flow Misexecution',
    'State Tracking Errors',
    'Missing Logic Elements',
    'Misordered Execution',
    'Instruction Misinterpretation',
)

#: Failures the judge could not place; excluded from category distributions.
UNCLASSIFIED = 'Unclassified'


@dataclass(frozen=True)
class FilterPolicy:
    """Thresholds for test and function filtering.

    Attributes
    ----------
    max_tracker_value: :class:`float`
        Tests with any tracker value at or above this are dropped
    max_decimal_places: :class:`int`
        Tests whose output needs more decimal places than this are dropped
    max_input_magnitude: :class:`float`
        Tests with any input number of larger magnitude are dropped
    min_tests_per_function: :class:`int`
        Functions left with fewer tests are dropped
    dedup_similarity_threshold: :class:`float`
        Functions more similar than this to a longer one are dropped
    """

    max_tracker_value: float = 50
    max_decimal_places: int = 6
    max_input_magnitude: float = 10**7
    min_tests_per_function: int = 3
    dedup_similarity_threshold: float = 0.7

    def __post_init__(self) -> None:
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, bool) or not isinstance(value, (int, float)) or value <= 0:
                raise ConfigError(f'{f.name} must be a positive number, not {value!r}')

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> FilterPolicy:
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f'Unknown filter policy key(s): {", ".join(unknown)}')
        return cls(**data)


# ==== records ====


def _require(record: Mapping[str, Any], key: str, kind: type | tuple[type, ...]) -> Any:
    try:
        value = record[key]
    except KeyError:
        raise CorpusError(f'missing field {key!r}') from None
    if not isinstance(value, kind):
        raise CorpusError(f'field {key!r} has the wrong type')
    return value


@dataclass
class EvolutionTurn:
    """One attempt to make a function more complex."""

    turn: int
    outcome: str
    score_before: float
    score_after: float | None = None
    description: str = ''

    OUTCOMES: ClassVar[tuple[str, ...]] = ('accepted', 'no-op', 'skipped')

    def __post_init__(self) -> None:
        if self.outcome not in self.OUTCOMES:
            raise CorpusError(f'unknown evolution outcome {self.outcome!r}')

    def to_record(self) -> dict[str, Any]:
        return {
            'turn': self.turn,
            'outcome': self.outcome,
            'score_before': self.score_before,
            'score_after': self.score_after,
            'description': self.description,
        }

    @classmethod
    def from_record(cls, record: Mapping[str, Any]) -> EvolutionTurn:
        return cls(
            turn=_require(record, 'turn', int),
            outcome=_require(record, 'outcome', str),
            score_before=_require(record, 'score_before', (int, float)),
            score_after=record.get('score_after'),
            description=record.get('description', ''),
        )


@dataclass
class SeedFunction:
    """A function in the corpus.

    Attributes
    ----------
    id: :class:`str`
        Unique within a corpus
    origin: :class:`str`
        Where the function came from, e.g. a contest problem tag
    source: :class:`str`
        The original function
    anonymized_source: Optional[:class:`str`]
        The anonymized, instrumented (and possibly evolved) function
    stats_keys: Optional[List[:class:`str`]]
        Names of the state trackers, one to three of them
    stages: Dict[:class:`str`, :class:`str`]
        Pipeline stage name to status (``done``, ``skipped`` or ``failed``)
    evolution: List[:class:`EvolutionTurn`]
        Every evolution turn applied so far
    """

    KIND: ClassVar[str] = 'function'

    id: str
    source: str
    origin: str = ''
    anonymized_source: str | None = None
    stats_keys: list[str] | None = None
    stages: dict[str, str] = field(default_factory=dict)
    evolution: list[EvolutionTurn] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.stats_keys is not None and not 1 <= len(self.stats_keys) <= 3:
            raise CorpusError(f'{self.id}: stats_keys must name 1 to 3 trackers')

    @property
    def tree(self) -> SyntaxTree:
        """The tree of the anonymized function, or of the original before anonymization."""
        return parse(self.anonymized_source or self.source)

    @property
    def original_tree(self) -> SyntaxTree:
        return parse(self.source)

    def to_record(self) -> dict[str, Any]:
        record: dict[str, Any] = {
            'kind': self.KIND,
            'id': self.id,
            'origin': self.origin,
            'source': self.source,
        }
        if self.anonymized_source is not None:
            record['anonymized_source'] = self.anonymized_source
        if self.stats_keys is not None:
            record['stats_keys'] = list(self.stats_keys)
        if self.stages:
            record['stages'] = dict(self.stages)
        if self.evolution:
            record['evolution'] = [turn.to_record() for turn in self.evolution]
        return record

    @classmethod
    def from_record(cls, record: Mapping[str, Any]) -> SeedFunction:
        fn = cls(
            id=_require(record, 'id', str),
            source=_require(record, 'source', str),
            origin=record.get('origin', ''),
            anonymized_source=record.get('anonymized_source'),
            stats_keys=record.get('stats_keys'),
            stages=dict(record.get('stages', {})),
            evolution=[EvolutionTurn.from_record(r) for r in record.get('evolution', ())],
        )
        if fn.anonymized_source is not None:
            require_subset(parse(fn.anonymized_source))
        return fn


@dataclass
class TestCase:
    """One input for a function, and its gold labels once they exist.

    Attributes
    ----------
    id: :class:`str`
        Unique within its function
    function_id: :class:`str`
        The function this test belongs to
    args: List[Any]
        Positional arguments
    gold_output: Any
        The labelled output, :data:`~stepwise.values.MISSING` until labelled
    gold_stats: Optional[Dict[:class:`str`, Any]]
        The labelled trackers, ``None`` until labelled
    """

    __test__ = False
    KIND: ClassVar[str] = 'test'

    id: str
    function_id: str
    args: list[Any]
    gold_output: Any = MISSING
    gold_stats: dict[str, Any] | None = None

    @property
    def labelled(self) -> bool:
        return self.gold_stats is not None and self.gold_output is not MISSING

    def with_gold(self, output: Any, stats: Mapping[str, Any]) -> TestCase:
        return replace(self, gold_output=output, gold_stats=dict(stats))

    def without_gold(self) -> TestCase:
        return replace(self, gold_output=MISSING, gold_stats=None)

    def to_record(self) -> dict[str, Any]:
        record = {
            'kind': self.KIND,
            'id': self.id,
            'function_id': self.function_id,
            'args': encode(self.args),
        }
        if self.labelled:
            record['gold_output'] = encode(self.gold_output)
            record['gold_stats'] = encode(self.gold_stats)
        return record

    @classmethod
    def from_record(cls, record: Mapping[str, Any]) -> TestCase:
        test = cls(
            id=_require(record, 'id', str),
            function_id=_require(record, 'function_id', str),
            args=decode(_require(record, 'args', list)),
        )
        if ('gold_output' in record) != ('gold_stats' in record):
            raise CorpusError('gold_output and gold_stats must appear together')
        if 'gold_stats' in record:
            stats = decode(_require(record, 'gold_stats', dict))
            test = test.with_gold(decode(record['gold_output']), stats)
        return test


@dataclass
class VerificationReport:
    """A verifier's verdict on an instruction."""

    desc_is_complete: bool
    reasoning: str = ''
    missing_aspects: list[str] = field(default_factory=list)
    coverage_percentage: float = 0.0

    def __post_init__(self) -> None:
        if not 0 <= self.coverage_percentage <= 100:
            raise CorpusError(f'coverage_percentage {self.coverage_percentage} is outside 0-100')
        if self.desc_is_complete and self.missing_aspects:
            raise CorpusError('a complete description cannot have missing aspects')

    def to_record(self) -> dict[str, Any]:
        return {
            'desc_is_complete': self.desc_is_complete,
            'reasoning': self.reasoning,
            'missing_aspects': list(self.missing_aspects),
            'coverage_percentage': self.coverage_percentage,
        }

    @classmethod
    def from_record(cls, record: Mapping[str, Any]) -> VerificationReport:
        missing = record.get('missing_aspects', [])
        if not isinstance(missing, list) or not all(isinstance(m, str) for m in missing):
            raise CorpusError('missing_aspects must be a list of strings')
        coverage = record.get('coverage_percentage', 0.0)
        if isinstance(coverage, bool) or not isinstance(coverage, (int, float)):
            raise CorpusError('coverage_percentage must be a number')
        return cls(
            desc_is_complete=_require(record, 'desc_is_complete', bool),
            reasoning=str(record.get('reasoning', '')),
            missing_aspects=missing,
            coverage_percentage=float(coverage),
        )


@dataclass
class InstructionRecord:
    """A natural-language description of a function, and its verification history.

    Attributes
    ----------
    status: :class:`str`
        ``unverified``, ``verified`` or ``discarded``
    discard_reason: Optional[:class:`str`]
        ``incomplete-after-budget``, ``provider-failure``, ``malformed-verification``
        or ``regeneration-failed``
    """

    KIND: ClassVar[str] = 'instruction'
    STATUSES: ClassVar[tuple[str, ...]] = ('unverified', 'verified', 'discarded')

    function_id: str
    inputs_section: str
    logics_section: str
    outputs_section: str
    verification_history: list[VerificationReport] = field(default_factory=list)
    status: str = 'unverified'
    discard_reason: str | None = None

    def __post_init__(self) -> None:
        if self.status not in self.STATUSES:
            raise CorpusError(f'unknown instruction status {self.status!r}')
        if self.status == 'verified' and not (
            self.verification_history and self.verification_history[-1].desc_is_complete
        ):
            raise CorpusError(f'{self.function_id}: verified without a complete verification')

    @property
    def verified(self) -> bool:
        return self.status == 'verified'

    @property
    def text(self) -> str:
        """The three sections as one description."""
        return (
            f'INPUTS: {self.inputs_section}\n\n'
            f'LOGICS: {self.logics_section}\n\n'
            f'OUTPUTS: {self.outputs_section}'
        )

    def to_record(self) -> dict[str, Any]:
        record: dict[str, Any] = {
            'kind': self.KIND,
            'id': self.function_id,
            'function_id': self.function_id,
            'inputs_section': self.inputs_section,
            'logics_section': self.logics_section,
            'outputs_section': self.outputs_section,
            'verification_history': [r.to_record() for r in self.verification_history],
            'status': self.status,
        }
        if self.discard_reason is not None:
            record['discard_reason'] = self.discard_reason
        return record

    @classmethod
    def from_record(cls, record: Mapping[str, Any]) -> InstructionRecord:
        return cls(
            function_id=_require(record, 'function_id', str),
            inputs_section=_require(record, 'inputs_section', str),
            logics_section=_require(record, 'logics_section', str),
            outputs_section=_require(record, 'outputs_section', str),
            verification_history=[
                VerificationReport.from_record(r) for r in record.get('verification_history', ())
            ],
            status=record.get('status', 'unverified'),
            discard_reason=record.get('discard_reason'),
        )


@dataclass
class EvalRecord:
    """One graded model response.

    ``parsed_output`` is :data:`~stepwise.values.MISSING` and ``parsed_stats`` is
    ``None`` when the response did not state them.
    """

    KIND: ClassVar[str] = 'eval'

    function_id: str
    test_id: str
    raw_response: str
    model: str = 'unknown'
    parsed_output: Any = MISSING
    parsed_stats: dict[str, Any] | None = None
    output_match: bool = False
    state_match: bool = False
    error_category: str | None = None

    def __post_init__(self) -> None:
        if self.parsed_output is MISSING and self.output_match:
            raise CorpusError('output_match without a parsed output')
        if self.parsed_stats is None and self.state_match:
            raise CorpusError('state_match without parsed statistics')
        if self.error_category is not None:
            if self.passed:
                raise CorpusError('a passing record cannot carry an error category')
            if self.error_category not in ERROR_CATEGORIES + (UNCLASSIFIED,):
                raise CorpusError(f'unknown error category {self.error_category!r}')

    @property
    def passed(self) -> bool:
        return self.output_match and self.state_match

    def to_record(self) -> dict[str, Any]:
        record: dict[str, Any] = {
            'kind': self.KIND,
            'id': f'{self.function_id}/{self.test_id}',
            'function_id': self.function_id,
            'test_id': self.test_id,
            'model': self.model,
            'raw_response': self.raw_response,
            'output_match': self.output_match,
            'state_match': self.state_match,
        }
        if self.parsed_output is not MISSING:
            record['parsed_output'] = encode(self.parsed_output)
        if self.parsed_stats is not None:
            record['parsed_stats'] = encode(self.parsed_stats)
        if self.error_category is not None:
            record['error_category'] = self.error_category
        return record

    @classmethod
    def from_record(cls, record: Mapping[str, Any]) -> EvalRecord:
        return cls(
            function_id=_require(record, 'function_id', str),
            test_id=_require(record, 'test_id', str),
            raw_response=_require(record, 'raw_response', str),
            model=record.get('model', 'unknown'),
            parsed_output=decode(record['parsed_output']) if 'parsed_output' in record else MISSING,
            parsed_stats=decode(record['parsed_stats']) if 'parsed_stats' in record else None,
            output_match=_require(record, 'output_match', bool),
            state_match=_require(record, 'state_match', bool),
            error_category=record.get('error_category'),
        )


Record = SeedFunction | TestCase | InstructionRecord | EvalRecord

_KINDS: dict[str, Any] = {
    SeedFunction.KIND: SeedFunction,
    TestCase.KIND: TestCase,
    InstructionRecord.KIND: InstructionRecord,
    EvalRecord.KIND: EvalRecord,
}


# ==== the corpus ====


class Corpus:
    """Functions with their tests, instructions and graded responses.

    Every collection keeps insertion order.
    """

    def __init__(self, records: Iterable[Record] = ()) -> None:
        self.functions: dict[str, SeedFunction] = {}
        self.tests: dict[tuple[str, str], TestCase] = {}
        self.instructions: dict[str, InstructionRecord] = {}
        self.evals: dict[tuple[str, str, str], EvalRecord] = {}
        for record in records:
            self.add(record)

    def add(self, record: Record) -> None:
        """Adds a record.

        Raises
        ------
        :class:`~stepwise.CorpusError`
            A record with the same identity is already present.
        """
        if isinstance(record, SeedFunction):
            self._insert(self.functions, record.id, record)
        elif isinstance(record, TestCase):
            self._insert(self.tests, (record.function_id, record.id), record)
        elif isinstance(record, InstructionRecord):
            self._insert(self.instructions, record.function_id, record)
        elif isinstance(record, EvalRecord):
            self._insert(self.evals, (record.model, record.function_id, record.test_id), record)
        else:
            raise TypeError(f'Not a corpus record: {record!r}')

    @staticmethod
    def _insert(table: dict[Any, Any], key: Any, record: Record) -> None:
        if key in table:
            raise CorpusError(f'duplicate {record.KIND} record {key!r}')
        table[key] = record

    def put(self, record: Record) -> None:
        """Adds or replaces a record, keeping the position of a replaced one."""
        if isinstance(record, SeedFunction):
            self.functions[record.id] = record
        elif isinstance(record, TestCase):
            self.tests[(record.function_id, record.id)] = record
        elif isinstance(record, InstructionRecord):
            self.instructions[record.function_id] = record
        else:
            self.evals[(record.model, record.function_id, record.test_id)] = record

    def tests_for(self, function_id: str) -> list[TestCase]:
        return [t for (fid, _), t in self.tests.items() if fid == function_id]

    def set_tests(self, function_id: str, tests: Iterable[TestCase]) -> None:
        """Replaces the tests of one function."""
        self.tests = {k: t for k, t in self.tests.items() if k[0] != function_id}
        for test in tests:
            self.add(test)

    def instruction_for(self, function_id: str) -> InstructionRecord | None:
        return self.instructions.get(function_id)

    def restricted(self, function_ids: Iterable[str]) -> Corpus:
        """A copy keeping only the given functions and the records that refer to them."""
        keep = set(function_ids)
        return Corpus(
            r
            for r in self.records()
            if (r.id if isinstance(r, SeedFunction) else r.function_id) in keep
        )

    def records(self) -> Iterator[Record]:
        """Every record, functions first, then tests, instructions and evaluations."""
        yield from self.functions.values()
        yield from self.tests.values()
        yield from self.instructions.values()
        yield from self.evals.values()

    def __len__(self) -> int:
        return len(self.functions)

    def __contains__(self, function_id: object) -> bool:
        return function_id in self.functions

    def __repr__(self) -> str:
        return (
            f'<Corpus functions={len(self.functions)} tests={len(self.tests)} '
            f'instructions={len(self.instructions)} evals={len(self.evals)}>'
        )


# ==== JSONL ====


def _dumps(record: Mapping[str, Any]) -> str:
    return json.dumps(record, sort_keys=True, ensure_ascii=False)


def read_records(path: str | Path) -> Iterator[tuple[int, dict[str, Any]]]:
    """Yields ``(line number, object)`` for each non-blank line of a JSONL file.

    Raises
    ------
    :class:`~stepwise.CorpusError`
        A line is not a JSON object, or the file cannot be read.
    """
    try:
        handle = open(path, encoding='utf-8')
    except OSError as e:
        raise CorpusError(f'cannot open corpus: {e.strerror}', path=str(path)) from None
    with handle:
        for lineno, line in enumerate(handle, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise CorpusError(f'invalid JSON: {e.msg}', path=str(path), line=lineno) from None
            if not isinstance(obj, dict):
                raise CorpusError('a record must be a JSON object', path=str(path), line=lineno)
            yield lineno, obj


def write_records(path: str | Path, records: Iterable[Mapping[str, Any]]) -> None:
    """Writes one canonical JSON object per line, replacing the file atomically."""
    target = Path(path)
    fd, tmp = tempfile.mkstemp(
        dir=target.parent or Path('.'), prefix=f'.{target.name}.', suffix='.tmp'
    )
    try:
        with os.fdopen(fd, 'w', encoding='utf-8', newline='\n') as out:
            for record in records:
                out.write(_dumps(record) + '\n')
        os.replace(tmp, target)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _parse_record(obj: Mapping[str, Any]) -> Record:
    kind = obj.get('kind')
    if kind not in _KINDS:
        raise CorpusError(f'unknown record kind {kind!r}')
    if not isinstance(obj.get('id'), str):
        raise CorpusError('a record needs a string id')
    return _KINDS[kind].from_record(obj)


def load(path: str | Path) -> Corpus:
    """Loads a corpus file. Either every line loads or nothing does.

    Raises
    ------
    :class:`~stepwise.CorpusError`
        A line is malformed; the error names the file and line.
    """
    corpus = Corpus()
    for lineno, obj in read_records(path):
        try:
            corpus.add(_parse_record(obj))
        except CorpusError as e:
            raise CorpusError(str(e), path=str(path), line=lineno) from None
        except StepwiseError as e:
            raise CorpusError(
                f'invalid function source: {e}', path=str(path), line=lineno
            ) from None
    log.debug('loaded %r from %s', corpus, path)
    return corpus


def save(corpus: Corpus, path: str | Path) -> None:
    """Writes a corpus; loading the file gives back an equal corpus."""
    write_records(path, (record.to_record() for record in corpus.records()))


# ==== filters ====


@dataclass(frozen=True)
class TestFilterResult:
    """Which tests survived, and why the others did not.

    Attributes
    ----------
    kept: List[:class:`str`]
        Surviving test ids, in input order
    removed: Dict[:class:`str`, :class:`str`]
        Removed test id to reason: ``execution-failed``, ``input-too-large``,
        ``malformed-stats``, ``tracker-too-large`` or ``excess-precision``
    """

    __test__ = False

    kept: list[str]
    removed: dict[str, str]


def _removal_reason(
    fn: SeedFunction, test: TestCase, result: ExecutionResult, policy: FilterPolicy
) -> str | None:
    if not result.ok:
        return 'execution-failed'
    if any(abs(x) > policy.max_input_magnitude for x in numeric_atoms(test.args)):
        return 'input-too-large'
    stats = result.stats
    if not stats or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in stats.values()
    ):
        return 'malformed-stats'
    if fn.stats_keys is not None and set(stats) != set(fn.stats_keys):
        return 'malformed-stats'
    if any(v >= policy.max_tracker_value for v in stats.values()):
        return 'tracker-too-large'
    if any(decimal_places(x) > policy.max_decimal_places for x in numeric_atoms(result.output)):
        return 'excess-precision'
    return None


def filter_tests(
    fn: SeedFunction,
    tests: Sequence[TestCase],
    results: Sequence[ExecutionResult],
    policy: FilterPolicy | None = None,
) -> TestFilterResult:
    """Decides which tests of a function to keep.

    Parameters
    ----------
    fn: :class:`SeedFunction`
        The function the tests belong to
    tests: Sequence[:class:`TestCase`]
        The candidate tests
    results: Sequence[:class:`~stepwise.ExecutionResult`]
        One execution result per test, in the same order
    policy: Optional[:class:`FilterPolicy`]
        Thresholds; the defaults when omitted
    """
    if len(tests) != len(results):
        raise ValueError(f'{len(tests)} tests but {len(results)} results')
    policy = policy or FilterPolicy()
    kept: list[str] = []
    removed: dict[str, str] = {}
    for test, result in zip(tests, results):
        reason = _removal_reason(fn, test, result, policy)
        if reason is None:
            kept.append(test.id)
        else:
            removed[test.id] = reason
            log.info('dropping test %s/%s: %s', fn.id, test.id, reason)
    return TestFilterResult(kept, removed)


def drop_sparse(corpus: Corpus, policy: FilterPolicy | None = None) -> Corpus:
    """A copy without the functions that have too few tests left."""
    policy = policy or FilterPolicy()
    counts = {fid: 0 for fid in corpus.functions}
    for fid, _ in corpus.tests:
        if fid in counts:
            counts[fid] += 1
    keep = [fid for fid, n in counts.items() if n >= policy.min_tests_per_function]
    for fid in counts.keys() - set(keep):
        log.info('dropping function %s: %d test(s) left', fid, counts[fid])
    return corpus.restricted(keep)


def _unit_rows(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    return np.divide(matrix, norms, out=np.zeros_like(matrix, dtype=np.float64), where=norms > 0)


def dedup(
    functions: Sequence[SeedFunction],
    embed: EmbeddingProvider,
    policy: FilterPolicy | None = None,
) -> list[SeedFunction]:
    """Removes near-duplicate functions, keeping the longer of each similar pair.

    Functions are visited longest first (ties by id); a function is kept unless
    its cosine similarity to an already kept function exceeds the threshold.

    Returns
    -------
    List[:class:`SeedFunction`]
        The kept functions, in input order

    Raises
    ------
    :class:`~stepwise.ProviderError`
        The embeddings could not be computed.
    """
    policy = policy or FilterPolicy()
    if not functions:
        return []
    vectors = np.asarray(embed.embed([fn.source for fn in functions]), dtype=np.float64)
    if vectors.shape[0] != len(functions):
        raise ProviderError(f'Expected {len(functions)} embeddings, got {vectors.shape[0]}')
    unit = _unit_rows(vectors.reshape(len(functions), -1))
    similarity = unit @ unit.T

    order = sorted(
        range(len(functions)), key=lambda i: (-len(functions[i].source), functions[i].id)
    )
    kept: list[int] = []
    for i in order:
        near = (k for k in kept if similarity[i, k] > policy.dedup_similarity_threshold)
        witness = next(near, None)
        if witness is None:
            kept.append(i)
        else:
            log.info(
                'dropping %s: similarity %.3f to %s',
                functions[i].id,
                similarity[i, witness],
                functions[witness].id,
            )
    survivors = set(kept)
    return [fn for i, fn in enumerate(functions) if i in survivors]
