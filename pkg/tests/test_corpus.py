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

import numpy as np
import pytest

from stepwise import *
from stepwise.values import MISSING

from conftest import WORKED_CASES, anonymized, fixture_source, verified_instruction


def ok(output, **stats) -> ExecutionResult:
    return ExecutionResult(Status.OK, output, stats, steps=1)


def test_save_and_load(tmp_path, worked_corpus):
    path = tmp_path / 'out.jsonl'
    worked_corpus.add(
        EvalRecord(
            'poj_1852', 't0', 'Output: 0', 'demo', 0, None, True, False, 'State Tracking Errors'
        )
    )
    save(worked_corpus, path)
    loaded = load(path)
    expected = [r.to_record() for r in worked_corpus.records()]
    assert [r.to_record() for r in loaded.records()] == expected
    # saving again gives the same bytes
    again = tmp_path / 'again.jsonl'
    save(loaded, again)
    assert again.read_bytes() == path.read_bytes()


def test_load_preserves_values(tmp_path):
    corpus = Corpus([
        anonymized('heap_trim', ['rm', 'max_sz']),
        TestCase(
            't0',
            'heap_trim',
            [3, [1, (2, 3)], {4: 'x'}, 2**70],
            (1, 2),
            {'rm': 0, 'max_sz': 1},
        ),
        TestCase('t1', 'heap_trim', [1, [1]]),
    ])
    save(corpus, tmp_path / 'c.jsonl')
    loaded = load(tmp_path / 'c.jsonl')
    labelled, bare = loaded.tests_for('heap_trim')
    assert labelled.args == [3, [1, [2, 3]], {4: 'x'}, 2**70]
    assert labelled.gold_output == [1, 2]
    assert labelled.labelled
    assert not bare.labelled
    assert bare.gold_output is MISSING
    assert bare.gold_stats is None


def test_load_reports_the_bad_line(tmp_path):
    good = json.dumps(anonymized('poj_1852').to_record())
    path = tmp_path / 'bad.jsonl'
    path.write_text(good + '\n\n{"kind": "test", "id": 1}\n', encoding='utf-8')
    with pytest.raises(CorpusError) as e:
        load(path)
    assert e.value.line == 3
    assert e.value.path == str(path)

    path.write_text(good + '\nnot json\n', encoding='utf-8')
    with pytest.raises(CorpusError) as e:
        load(path)
    assert e.value.line == 2

    path.write_text('[1, 2]\n', encoding='utf-8')
    with pytest.raises(CorpusError):
        load(path)

    path.write_text('{"kind": "widget", "id": "x"}\n', encoding='utf-8')
    with pytest.raises(CorpusError):
        load(path)

    with pytest.raises(CorpusError):
        load(tmp_path / 'missing.jsonl')


def test_load_rejects_duplicates_and_invalid_sources(tmp_path):
    line = json.dumps(anonymized('poj_1852').to_record())
    path = tmp_path / 'dup.jsonl'
    path.write_text(f'{line}\n{line}\n', encoding='utf-8')
    with pytest.raises(CorpusError) as e:
        load(path)
    assert e.value.line == 2

    record = anonymized('poj_1852').to_record()
    record['anonymized_source'] = (
        'def f(x):\n    while True:\n        pass\n    else:\n        pass\n'
    )
    path.write_text(json.dumps(record) + '\n', encoding='utf-8')
    with pytest.raises(CorpusError):
        load(path)

    record['anonymized_source'] = 'def f(x:\n'
    path.write_text(json.dumps(record) + '\n', encoding='utf-8')
    with pytest.raises(CorpusError):
        load(path)


def test_corpus_bookkeeping(worked_corpus):
    assert len(worked_corpus) == len(WORKED_CASES)
    assert 'cf_328a' in worked_corpus
    assert list(worked_corpus.functions) == list(WORKED_CASES)
    with pytest.raises(CorpusError):
        worked_corpus.add(anonymized('cf_328a'))
    with pytest.raises(CorpusError):
        worked_corpus.add(TestCase('t0', 'cf_328a', [1]))

    worked_corpus.put(TestCase('t0', 'cf_328a', [1]))
    assert worked_corpus.tests_for('cf_328a')[0].args == [1]

    worked_corpus.set_tests(
        'cf_328a', [TestCase('a', 'cf_328a', [1]), TestCase('b', 'cf_328a', [2])]
    )
    assert [t.id for t in worked_corpus.tests_for('cf_328a')] == ['a', 'b']

    small = worked_corpus.restricted(['poj_1852', 'cf_818d'])
    assert list(small.functions) == ['poj_1852', 'cf_818d']
    assert len(small.tests) == 2
    assert set(small.instructions) == {'poj_1852', 'cf_818d'}
    assert small.instruction_for('cf_328a') is None

    with pytest.raises(TypeError):
        worked_corpus.add('not a record')


def test_record_validation():
    with pytest.raises(CorpusError):
        SeedFunction('x', 'def f(a):\n    return a, {}\n', stats_keys=[])
    with pytest.raises(CorpusError):
        SeedFunction('x', 'def f(a):\n    return a, {}\n', stats_keys=['a', 'b', 'c', 'd'])
    with pytest.raises(CorpusError):
        VerificationReport(True, 'ok', ['the loop'], 90.0)
    with pytest.raises(CorpusError):
        VerificationReport(False, 'meh', [], 120.0)
    with pytest.raises(CorpusError):
        InstructionRecord(
            'x', 'in', 'logic', 'out', [VerificationReport(False, 'no', ['loop'], 40.0)], 'verified'
        )
    with pytest.raises(CorpusError):
        InstructionRecord('x', 'in', 'logic', 'out', status='pending')
    with pytest.raises(CorpusError):
        EvalRecord('x', 't0', 'nothing', output_match=True)
    with pytest.raises(CorpusError):
        EvalRecord(
            'x',
            't0',
            'Output: 1',
            parsed_output=1,
            parsed_stats={},
            output_match=True,
            state_match=True,
            error_category='State Tracking Errors',
        )
    with pytest.raises(CorpusError):
        EvalRecord('x', 't0', 'Output: 1', parsed_output=1, error_category='Bad Luck')
    with pytest.raises(CorpusError):
        TestCase.from_record({'id': 't0', 'function_id': 'x', 'args': [], 'gold_output': 1})
    with pytest.raises(CorpusError):
        VerificationReport.from_record({'desc_is_complete': 'yes'})


def test_instruction_text():
    record = verified_instruction('poj_1852')
    assert record.verified
    assert record.text.startswith('INPUTS: ')
    assert '\n\nLOGICS: ' in record.text
    assert '\n\nOUTPUTS: ' in record.text


def test_eval_record_round_trip():
    record = EvalRecord(
        'cf_328a', 't0', 'Output: 3', 'demo', 3, {'c': 1}, True, False, 'Missing Logic Elements'
    )
    assert not record.passed
    again = EvalRecord.from_record(json.loads(json.dumps(record.to_record())))
    assert again == record
    bare = EvalRecord('cf_328a', 't0', '???', 'demo')
    assert 'parsed_output' not in bare.to_record()
    assert EvalRecord.from_record(bare.to_record()).parsed_output is MISSING


def test_filter_policy():
    assert FilterPolicy() == FilterPolicy(50, 6, 10**7, 3, 0.7)
    assert FilterPolicy.from_mapping({'max_tracker_value': 10}).max_tracker_value == 10
    with pytest.raises(ConfigError):
        FilterPolicy.from_mapping({'max_trackers': 10})
    with pytest.raises(ConfigError):
        FilterPolicy(max_tracker_value=0)
    with pytest.raises(ConfigError):
        FilterPolicy(min_tests_per_function=True)


def test_filter_tests_reasons():
    fn = anonymized('heap_trim', ['rm', 'max_sz'])
    tests = [TestCase(f't{i}', fn.id, [1, [i]]) for i in range(8)]
    tests[2] = TestCase('t2', fn.id, [1, [10**8]])
    results = [
        ok(1, rm=0, max_sz=1),
        ExecutionResult(
            Status.RUNTIME_ERROR,
            error_kind='index-out-of-range',
            message='list index out of range',
        ),
        ok(1, rm=0, max_sz=1),
        ok(1, rm=0, max_sz=50),
        ok(0.1234567, rm=0, max_sz=1),
        ok(1, rm=0),
        ok(1, rm=True, max_sz=1),
        ok(0.5, rm=49, max_sz=1.25),
    ]
    outcome = filter_tests(fn, tests, results)
    assert outcome.kept == ['t0', 't7']
    assert outcome.removed == {
        't1': 'execution-failed',
        't2': 'input-too-large',
        't3': 'tracker-too-large',
        't4': 'excess-precision',
        't5': 'malformed-stats',
        't6': 'malformed-stats',
    }


def test_filter_tests_limits_and_lengths():
    fn = anonymized('heap_trim', ['rm', 'max_sz'])
    tests = [TestCase('t0', fn.id, [1, [1]])]
    limited = [ExecutionResult(Status.LIMIT_EXCEEDED, error_kind='steps')]
    assert filter_tests(fn, tests, limited).removed == {'t0': 'execution-failed'}
    strict = FilterPolicy(max_tracker_value=2)
    outcome = filter_tests(fn, tests, [ok(1, rm=0, max_sz=2)], strict)
    assert outcome.removed == {'t0': 'tracker-too-large'}
    with pytest.raises(ValueError):
        filter_tests(fn, tests, [])


def test_filter_tests_boundaries():
    fn = anonymized('heap_trim', ['rm', 'max_sz'])
    tests = [
        TestCase('at-limit', fn.id, [1, [10**7, -(10**7)]]),
        TestCase('over-limit', fn.id, [1, [10**7 + 1]]),
        TestCase('six-places', fn.id, [1, [1]]),
        TestCase('seven-places', fn.id, [1, [1]]),
        TestCase('tracker-49', fn.id, [1, [1]]),
    ]
    results = [
        ok(1, rm=0, max_sz=1),
        ok(1, rm=0, max_sz=1),
        ok(0.123456, rm=0, max_sz=1),
        ok(0.1234567, rm=0, max_sz=1),
        ok(1, rm=49, max_sz=49),
    ]
    outcome = filter_tests(fn, tests, results)
    assert outcome.kept == ['at-limit', 'six-places', 'tracker-49']
    assert outcome.removed == {'over-limit': 'input-too-large', 'seven-places': 'excess-precision'}


def test_filter_tests_is_idempotent():
    fn = anonymized('heap_trim', ['rm', 'max_sz'])
    tests = [TestCase(f't{i}', fn.id, [3, [i, -i, 2 * i]]) for i in range(6)]
    tests.append(TestCase('wide', fn.id, [60, list(range(60))]))
    tests.append(TestCase('empty', fn.id, [0, None]))
    results = run_suite(fn.tree, tests)
    first = filter_tests(fn, tests, results)
    survivors = [(t, r) for t, r in zip(tests, results) if t.id in first.kept]
    again = filter_tests(fn, [t for t, _ in survivors], [r for _, r in survivors])
    assert again.kept == first.kept
    assert again.removed == {}


def test_filter_tests_on_real_runs():
    fn = anonymized('heap_trim', ['rm', 'max_sz'])
    tests = [
        TestCase('small', fn.id, [3, [1, -3, 2]]),
        TestCase('wide', fn.id, [60, list(range(60))]),
        TestCase('empty', fn.id, [0, None]),
    ]
    outcome = filter_tests(fn, tests, run_suite(fn.tree, tests))
    assert outcome.kept == ['small']
    assert outcome.removed == {'wide': 'tracker-too-large', 'empty': 'execution-failed'}


def test_drop_sparse(worked_corpus):
    for i in range(1, 3):
        worked_corpus.add(TestCase(f't{i}', 'cf_818d', WORKED_CASES['cf_818d']['args']))
    kept = drop_sparse(worked_corpus)
    assert list(kept.functions) == ['cf_818d']
    assert len(kept.tests) == 3
    kept = drop_sparse(worked_corpus, FilterPolicy(min_tests_per_function=1))
    assert list(kept.functions) == list(WORKED_CASES)


def _fn(id_: str, body: str) -> SeedFunction:
    return SeedFunction(id_, f'def f(x):\n{body}\n    return x, {{"n": 1}}\n')


def test_dedup_keeps_the_longer_function():
    long = _fn('long', '    x = x + 1\n    x = x * 2')
    short = _fn('short', '    x = x + 1')
    other = _fn('other', '    x = -x')
    embed = StaticEmbeddingProvider({
        long.source: [1.0, 0.0],
        short.source: [0.9, 0.1],
        other.source: [0.0, 1.0],
    })
    assert dedup([short, other, long], embed) == [other, long]
    loose = FilterPolicy(dedup_similarity_threshold=0.999)
    assert dedup([short, other, long], embed, loose) == [short, other, long]
    assert dedup([], embed) == []


def test_dedup_keeps_a_pair_at_the_threshold():
    first = _fn('first', '    x = x + 1')
    second = _fn('second', '    x = -x')
    # both vectors have an exact norm, so the cosine is exactly 0.7
    embed = StaticEmbeddingProvider({
        first.source: [1.0, 0.0, 0.0, 0.0],
        second.source: [7.0, 1.0, 1.0, 7.0],
    })
    assert dedup([first, second], embed) == [first, second]
    strict = FilterPolicy(dedup_similarity_threshold=0.69)
    assert dedup([first, second], embed, strict) == [first]


def test_dedup_chains_are_resolved_greedily():
    a = _fn('a', '    x = x + 1\n    x = x * 2\n    x = x - 3')
    b = _fn('b', '    x = x + 1\n    x = x * 2')
    c = _fn('c', '    x = x + 1')
    # a and b are alike, b and c are alike, a and c are not
    embed = StaticEmbeddingProvider({
        a.source: [1.0, 0.0],
        b.source: [1.0, 1.0],
        c.source: [0.0, 1.0],
    })
    assert dedup([c, b, a], embed) == [c, a]


def test_dedup_ties_break_by_id():
    a = SeedFunction('b', 'def f(x):\n    return x, {"n": 2}\n')
    b = SeedFunction('a', 'def f(x):\n    return x, {"n": 1}\n')
    embed = StaticEmbeddingProvider({a.source: [1.0, 1.0], b.source: [1.0, 1.0]})
    assert dedup([a, b], embed) == [b]


def test_dedup_survivors_are_dissimilar():
    sources = [fixture_source(name) for name in WORKED_CASES]
    functions = [SeedFunction(name, src) for name, src in zip(WORKED_CASES, sources)]
    functions.append(SeedFunction('copy', sources[0] + '\n'))
    embed = HashingEmbeddingProvider()
    kept = dedup(functions, embed)
    assert 'poj_1852' not in {fn.id for fn in kept}
    vectors = embed.embed([fn.source for fn in kept])
    unit = vectors / np.linalg.norm(vectors, axis=1, keepdims=True)
    similarity = unit @ unit.T
    np.fill_diagonal(similarity, 0)
    assert similarity.max() <= 0.7


def test_dedup_rejects_short_embeddings():
    fn = _fn('x', '    pass')

    class Broken(EmbeddingProvider):
        def embed(self, texts):
            return np.zeros((0, 4))

    with pytest.raises(ProviderError) as excinfo:
        dedup([fn], Broken())
    assert excinfo.value.retriable
