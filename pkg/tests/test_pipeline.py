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

import pytest

from stepwise import *

from conftest import anonymized


ORIGINAL = '''\
def solve(n, nums):
    total = 0
    for v in nums:
        if v > 0:
            total += v
    return total
'''

ANONYMIZED = '''\
def f(a, b):
    s = 0
    c = 0
    for x in b:
        c += 1
        if x > 0:
            s += x
    return s, {'c': c}
'''

OFF_BY_ONE = ANONYMIZED.replace("return s, {'c': c}", "return s + 1, {'c': c}")

EVOLVED = '''\
def f(a, b):
    s = 0
    c = 0
    i = 0
    while i < len(b):
        x = b[i]
        c += 1
        if x > 0:
            s += x
        i += 1
    return s, {'c': c}
'''

SIMPLER = '''\
def f(a, b):
    return 0, {'c': 0}
'''


def reply(**obj) -> str:
    return f'Here you go.\n```json\n{json.dumps(obj)}\n```\n'


def anonymize_reply(source: str = ANONYMIZED, keys: list[str] | None = None) -> str:
    return reply(function=source, stats_keys=keys or ['c'])


def evolve_reply(source: str = EVOLVED) -> str:
    return reply(
        evolved_function=source, stats_keys=['c'], evolution_description='index the list by hand'
    )


def describe_reply(inputs: str = 'A count and a list.') -> str:
    return reply(
        inputs=inputs,
        logics='Walk the list, counting every item and adding up the positive ones.',
        outputs='The total, and the counter c.',
    )


def verify_reply(complete: bool, missing: list[str] | None = None, coverage: float = 100) -> str:
    return reply(
        desc_is_complete=complete,
        reasoning='compared step by step',
        missing_aspects=missing or [],
        coverage_percentage=coverage,
    )


def seed(fid: str = 'sum_pos') -> SeedFunction:
    return SeedFunction(fid, ORIGINAL, origin='demo')


def cases_for(fid: str = 'sum_pos') -> list[TestCase]:
    return [
        TestCase('t0', fid, [3, [1, -2, 3]]),
        TestCase('t1', fid, [0, []]),
        TestCase('t2', fid, [2, [5, 5]]),
    ]


def instrumented(fid: str = 'sum_pos') -> SeedFunction:
    return SeedFunction(fid, ORIGINAL, 'demo', ANONYMIZED, ['c'], {'anonymize': 'done'})


def test_parse_stages():
    assert parse_stages('label, anonymize') == ('anonymize', 'label')
    assert parse_stages(','.join(reversed(STAGES))) == STAGES
    assert parse_stages('') == ()
    with pytest.raises(ConfigError):
        parse_stages('anonymize,translate')


def test_extract_json():
    assert extract_json('```json\n{"a": 1}\n```') == {'a': 1}
    assert extract_json('Sure! {"a": {"b": [1, 2]}} Hope that helps.') == {'a': {'b': [1, 2]}}
    assert extract_json('```\n{"a": 1}\n```\nor maybe {"a": 2}') == {'a': 1}
    with pytest.raises(ValueError):
        extract_json('no json here')
    with pytest.raises(ValueError):
        extract_json('[1, 2, 3]')


def test_event_log(tmp_path):
    path = tmp_path / 'events.jsonl'
    with EventLog(path) as events:
        events.emit('describe', 'x', 1, 'accepted')
        events.emit('verify', 'x', 2, 'incomplete', 'the loop')
    lines = [json.loads(line) for line in path.read_text(encoding='utf-8').splitlines()]
    assert lines == events.events
    assert lines[1] == {
        'stage': 'verify',
        'function_id': 'x',
        'turn': 2,
        'outcome': 'incomplete',
        'detail': 'the loop',
    }


def test_anonymize_accepts_a_faithful_candidate():
    llm = ReplayChatProvider({'anonymize:sum_pos': [anonymize_reply()]})
    events = EventLog()
    fn = anonymize_and_instrument(seed(), llm, cases_for(), events=events)
    assert fn.anonymized_source == ANONYMIZED
    assert fn.stats_keys == ['c']
    assert fn.stages == {'anonymize': 'done'}
    assert fn.source == ORIGINAL
    (tag, messages), = llm.calls
    assert tag == 'anonymize:sum_pos'
    assert ORIGINAL in messages[0][1]
    assert events.events[-1]['outcome'] == 'accepted'


def test_anonymize_rejects_changed_behaviour():
    llm = ReplayChatProvider(
        {'anonymize:sum_pos': [anonymize_reply(OFF_BY_ONE), anonymize_reply()]}
    )
    events = EventLog()
    fn = anonymize_and_instrument(seed(), llm, cases_for(), events=events)
    assert fn.anonymized_source == ANONYMIZED
    assert llm.calls_tagged('anonymize:') == 2
    assert [e['outcome'] for e in events.events] == ['rejected', 'accepted']


def test_anonymize_rejections():
    renamed = ANONYMIZED.replace('def f(', 'def g(')
    wider = ANONYMIZED.replace('def f(a, b)', 'def f(a, b, c0)')
    unpaired = ANONYMIZED.replace("return s, {'c': c}", 'return s')
    undeclared = ANONYMIZED
    for candidate, keys in [
        (renamed, ['c']),
        (wider, ['c']),
        (unpaired, ['c']),
        (undeclared, ['c', 'd']),
        (ANONYMIZED, ['a', 'b', 'c', 'd']),
        ('def f(a, b):\n    return [x for x in b if x], {"c": 0}\n', ['c']),
    ]:
        llm = ReplayChatProvider({'anonymize:sum_pos': [anonymize_reply(candidate, keys)] * 3})
        with pytest.raises(StageError) as e:
            anonymize_and_instrument(seed(), llm, cases_for())
        assert e.value.stage == 'anonymize'
        assert e.value.function_id == 'sum_pos'
        assert llm.calls_tagged('anonymize:') == 3


def test_anonymize_retries_unparseable_replies():
    llm = ReplayChatProvider({'anonymize:sum_pos': ['I would rather not.', anonymize_reply()]})
    fn = anonymize_and_instrument(seed(), llm, cases_for())
    assert fn.stats_keys == ['c']

    llm = ReplayChatProvider({'anonymize:sum_pos': ['no'] * 5})
    with pytest.raises(StageError):
        anonymize_and_instrument(seed(), llm, cases_for(), config=PipelineConfig(max_retries=2))
    assert llm.calls_tagged('anonymize:') == 2


def test_anonymize_ignores_tests_the_original_cannot_run():
    tests = cases_for() + [TestCase('bad', 'sum_pos', [1, None])]
    llm = ReplayChatProvider({'anonymize:sum_pos': [anonymize_reply()]})
    assert anonymize_and_instrument(seed(), llm, tests).anonymized_source == ANONYMIZED


def test_evolve_accepts_a_more_complex_candidate():
    fn = instrumented()
    llm = ReplayChatProvider({'evolve:sum_pos': [evolve_reply()]})
    evolved = evolve(fn, llm, PipelineConfig(), cases_for())
    assert evolved.anonymized_source == EVOLVED
    assert evolved.stages['evolve'] == 'done'
    turn, = evolved.evolution
    assert turn.outcome == 'accepted'
    assert turn.score_after > turn.score_before
    assert turn.score_before == measure(parse(ANONYMIZED)).score
    assert turn.description == 'index the list by hand'
    assert [r.output for r in run_suite(evolved.tree, cases_for())] == [4, 0, 10]


def test_evolve_no_op():
    llm = ReplayChatProvider({'evolve:sum_pos': [evolve_reply(ANONYMIZED)]})
    evolved = evolve(instrumented(), llm, PipelineConfig(), cases_for())
    assert evolved.anonymized_source == ANONYMIZED
    assert evolved.evolution[0].outcome == 'no-op'
    assert evolved.stages['evolve'] == 'done'


def test_evolve_skips_when_nothing_is_acceptable():
    narrower = EVOLVED.replace('def f(a, b)', 'def f(b)')
    llm = ReplayChatProvider(
        {'evolve:sum_pos': [evolve_reply(SIMPLER), evolve_reply(narrower), 'none']}
    )
    events = EventLog()
    evolved = evolve(instrumented(), llm, PipelineConfig(), cases_for(), events=events)
    assert evolved.anonymized_source == ANONYMIZED
    assert evolved.stages['evolve'] == 'skipped'
    turn, = evolved.evolution
    assert turn.outcome == 'skipped'
    assert turn.score_after is None
    assert [e['outcome'] for e in events.events] == ['rejected', 'rejected', 'malformed', 'failed']


def test_evolve_several_turns():
    llm = ReplayChatProvider({'evolve:sum_pos': [evolve_reply(), 'nope', 'nope', 'nope']})
    evolved = evolve(instrumented(), llm, PipelineConfig(evolution_turns=2), cases_for())
    assert [t.outcome for t in evolved.evolution] == ['accepted', 'skipped']
    assert [t.turn for t in evolved.evolution] == [1, 2]
    assert evolved.anonymized_source == EVOLVED
    assert evolved.stages['evolve'] == 'done'


def test_evolve_needs_an_anonymized_function():
    with pytest.raises(StageError):
        evolve(seed(), ReplayChatProvider([]))


def test_generate_instruction():
    llm = ReplayChatProvider({'describe:sum_pos': [describe_reply()]})
    record = generate_instruction(instrumented(), llm)
    assert record.function_id == 'sum_pos'
    assert record.inputs_section == 'A count and a list.'
    assert record.status == 'unverified'
    assert record.verification_history == []
    (_, messages), = llm.calls
    assert ANONYMIZED in messages[0][1]
    assert ORIGINAL not in messages[0][1]


def test_generate_instruction_needs_every_section():
    incomplete = reply(inputs='A count and a list.', logics='Add things up.')
    blank = reply(inputs='A count and a list.', logics='   ', outputs='The total.')
    llm = ReplayChatProvider({'describe:sum_pos': [incomplete, blank, incomplete]})
    with pytest.raises(StageError) as e:
        generate_instruction(instrumented(), llm)
    assert e.value.stage == 'describe'
    with pytest.raises(StageError):
        generate_instruction(seed(), llm)


def test_generate_instruction_lists_missing_aspects():
    llm = ReplayChatProvider({'describe:sum_pos': [describe_reply()]})
    generate_instruction(
        instrumented(), llm, missing_aspects=['how c is counted', 'the empty list'], turn=2
    )
    (_, messages), = llm.calls
    assert '- how c is counted\n- the empty list' in messages[0][1]


def unverified() -> InstructionRecord:
    return InstructionRecord('sum_pos', 'A count and a list.', 'Add things up.', 'The total.')


def test_verified_at_first_turn():
    llm = ReplayChatProvider({'verify:sum_pos': [verify_reply(True)]})
    record = verify_and_refine(instrumented(), unverified(), llm)
    assert record.status == 'verified'
    assert record.discard_reason is None
    assert len(record.verification_history) == 1
    assert record.verification_history[0].coverage_percentage == 100.0
    (_, messages), = llm.calls
    assert unverified().text in messages[0][1]


def test_verified_after_a_regeneration():
    llm = ReplayChatProvider({
        'verify:sum_pos': [verify_reply(False, ['how c is counted'], 60), verify_reply(True)],
        'describe:sum_pos': [describe_reply('Regenerated inputs.')],
    })
    record = verify_and_refine(instrumented(), unverified(), llm)
    assert record.status == 'verified'
    assert record.inputs_section == 'Regenerated inputs.'
    assert [r.desc_is_complete for r in record.verification_history] == [False, True]
    assert record.verification_history[0].missing_aspects == ['how c is counted']
    assert [tag for tag, _ in llm.calls] == ['verify:sum_pos', 'describe:sum_pos', 'verify:sum_pos']
    assert '- how c is counted' in llm.calls[1][1][0][1]


def test_discarded_after_the_budget():
    llm = ReplayChatProvider({
        'verify:sum_pos': [verify_reply(False, ['the loop'], 40)] * 3,
        'describe:sum_pos': [describe_reply()] * 2,
    })
    events = EventLog()
    record = verify_and_refine(instrumented(), unverified(), llm, events=events)
    assert record.status == 'discarded'
    assert record.discard_reason == 'incomplete-after-budget'
    assert len(record.verification_history) == 3
    assert llm.calls_tagged('verify:') == 3
    assert llm.calls_tagged('describe:') == 2
    assert events.events[-1]['outcome'] == 'discarded'


def test_discard_reasons():
    incomplete = verify_reply(False, ['the loop'], 40)
    cases = [
        ({'verify:sum_pos': [incomplete]}, 'regeneration-failed', 1),
        ({'verify:sum_pos': ['not a verdict'] * 3}, 'malformed-verification', 0),
        ({}, 'provider-failure', 0),
        ({'verify:sum_pos': [reply(desc_is_complete='maybe')] * 3}, 'malformed-verification', 0),
        ({'verify:sum_pos': [verify_reply(False, coverage=140)] * 3}, 'malformed-verification', 0),
    ]
    for responses, reason, reports in cases:
        record = verify_and_refine(instrumented(), unverified(), ReplayChatProvider(responses))
        assert record.status == 'discarded'
        assert record.discard_reason == reason
        assert record.discard_reason in DISCARD_REASONS
        assert len(record.verification_history) == reports


def test_verification_replies_are_normalized():
    llm = ReplayChatProvider({
        'verify:sum_pos': [
            reply(
                desc_is_complete='true',
                reasoning='fine',
                missing_aspects=['ignored'],
                coverage_percentage='95%',
            )
        ]
    })
    record = verify_and_refine(instrumented(), unverified(), llm)
    report, = record.verification_history
    assert report.desc_is_complete
    assert report.missing_aspects == []
    assert report.coverage_percentage == 95.0


def test_gold_label():
    fn = anonymized('heap_trim', ['rm', 'max_sz'])
    tests = [
        TestCase('good', 'heap_trim', [3, [1, -3, 2]]),
        TestCase('bad', 'heap_trim', [0, None]),
    ]
    result = gold_label(fn, tests)
    labelled, = result.labelled
    assert labelled.gold_output == 3
    assert labelled.gold_stats == {'rm': 0, 'max_sz': 3}
    assert result.dropped == {'bad': 'runtime_error'}
    assert len(result.results) == 2
    with pytest.raises(StageError):
        gold_label(seed(), tests)


def full_replies(*fids: str) -> dict[str, list[str]]:
    responses: dict[str, list[str]] = {}
    for fid in fids:
        responses[f'anonymize:{fid}'] = [anonymize_reply()]
        responses[f'evolve:{fid}'] = [evolve_reply()]
        responses[f'describe:{fid}'] = [describe_reply()]
        responses[f'verify:{fid}'] = [verify_reply(True)]
    return responses


def fresh_corpus(*fids: str) -> Corpus:
    corpus = Corpus()
    for fid in fids:
        corpus.add(seed(fid))
        for test in cases_for(fid):
            corpus.add(test)
    return corpus


def test_pipeline_end_to_end():
    fids = ('sum_pos', 'sum_pos_2')
    out = Pipeline(ReplayChatProvider(full_replies(*fids))).run(fresh_corpus(*fids), STAGES)
    assert list(out.functions) == list(fids)
    for fid in fids:
        fn = out.functions[fid]
        assert fn.anonymized_source == EVOLVED
        assert set(fn.stages) == set(STAGES)
        assert set(fn.stages.values()) == {'done'}
        assert out.instruction_for(fid).verified
        labels = [(t.gold_output, t.gold_stats) for t in out.tests_for(fid)]
        assert labels == [(4, {'c': 3}), (0, {'c': 0}), (10, {'c': 2})]


def test_pipeline_is_deterministic():
    fids = ('a', 'b', 'c')
    serial = Pipeline(ReplayChatProvider(full_replies(*fids))).run(fresh_corpus(*fids))
    pipeline = Pipeline(ReplayChatProvider(full_replies(*fids)), PipelineConfig(jobs=3))
    parallel = pipeline.run(fresh_corpus(*fids))
    assert [r.to_record() for r in serial.records()] == [r.to_record() for r in parallel.records()]


def test_pipeline_resumes_without_calls(tmp_path):
    pipeline = Pipeline(ReplayChatProvider(full_replies('sum_pos')))
    first = pipeline.run(fresh_corpus('sum_pos'), STAGES)
    save(first, tmp_path / 'done.jsonl')
    idle = ReplayChatProvider({})
    second = Pipeline(idle).run(load(tmp_path / 'done.jsonl'), STAGES)
    assert idle.calls == []
    assert [r.to_record() for r in second.records()] == [r.to_record() for r in first.records()]


def test_pipeline_marks_failed_stages():
    responses = full_replies('sum_pos')
    llm = ReplayChatProvider(responses)
    out = Pipeline(llm).run(fresh_corpus('sum_pos', 'broken'))
    assert out.functions['broken'].stages == {'anonymize': 'failed'}
    assert not any(t.labelled for t in out.tests_for('broken'))
    assert out.instruction_for('broken') is None
    assert out.functions['sum_pos'].stages['label'] == 'done'
    assert llm.calls_tagged('evolve:broken') == 0


def test_pipeline_runs_only_requested_stages():
    llm = ReplayChatProvider(full_replies('sum_pos'))
    out = Pipeline(llm).run(fresh_corpus('sum_pos'), ['anonymize', 'label'])
    fn = out.functions['sum_pos']
    assert fn.stages == {'anonymize': 'done', 'label': 'done'}
    assert fn.anonymized_source == ANONYMIZED
    assert llm.calls_tagged('evolve:') == 0
    assert all(t.labelled for t in out.tests_for('sum_pos'))


def test_pipeline_filter_drops_sparse_functions():
    corpus = fresh_corpus('sum_pos')
    corpus.add(instrumented('thin'))
    corpus.add(TestCase('t0', 'thin', [1, [1]]))
    out = Pipeline(ReplayChatProvider({})).run(corpus, ['label', 'filter'])
    assert 'thin' not in out
    corpus = fresh_corpus('sum_pos')
    corpus.functions['sum_pos'] = instrumented('sum_pos')
    out = Pipeline(ReplayChatProvider({})).run(corpus, ['label', 'filter'])
    assert [t.id for t in out.tests_for('sum_pos')] == ['t0', 't1', 't2']
