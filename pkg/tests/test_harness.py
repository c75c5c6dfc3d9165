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
import math
import random

import pytest

from stepwise import *
from stepwise.values import MISSING

from conftest import FIXTURES, WORKED_CASES, anonymized, fixture_source, verified_instruction


def labelled(name: str) -> TestCase:
    case = WORKED_CASES[name]
    return TestCase('t0', name, case['args'], case['gold_output'], case['gold_stats'])


@pytest.mark.parametrize('name', list(WORKED_CASES))
def test_recorded_responses(name):
    case = WORKED_CASES[name]
    record = grade(labelled(name), case['response'], 'demo')
    assert record.output_match is case['output_match']
    assert record.state_match is case['state_match']
    assert record.parsed_output is not MISSING
    assert record.parsed_stats is not None
    assert set(record.parsed_stats) == set(case['gold_stats'])


def test_parse_response_formats():
    assert parse_response('Output: 3\nStatistics: {"a": 1}') == (3, {'a': 1})
    assert parse_response('**Output:** [1, 2]\n**Statistics:** {\'a\': 1}') == ([1, 2], {'a': 1})
    assert parse_response('Output:\n(1, "x")\nStatistics:\n{"a": -2.5}') == ((1, 'x'), {'a': -2.5})
    assert parse_response('Output: `7`.\nStats: {"k": 0}') == (7, {'k': 0})
    assert parse_response('Output: 7, Statistics: {"k": 0}') == (7, {'k': 0})
    assert parse_response('output: True\nstatistics: {"k": None}') == (True, {'k': None})


def test_parse_response_takes_the_last_answer():
    text = (
        'Output: 1\nStatistics: {"a": 1}\n'
        'Wait, I made a mistake.\n'
        'Output: 2\nStatistics: {"a": 2}'
    )
    assert parse_response(text) == (2, {'a': 2})


def test_parse_response_missing_parts():
    output, stats = parse_response('I could not finish.')
    assert output is MISSING
    assert stats is None
    output, stats = parse_response('Output: the number three\nStatistics: {"a": 1}')
    assert output is MISSING
    assert stats == {'a': 1}
    output, stats = parse_response('Output: 3\nStatistics: not sure')
    assert output == 3
    assert stats is None
    assert parse_response('Output: 3\nStatistics: {1: 2}')[1] is None
    assert parse_response('Output: 3\nStatistics: [1, 2]')[1] is None
    assert parse_response('Output: 3\nStatistics: {"a": 1')[1] is None


def test_parse_response_code_formatting():
    text = "**Output:**\n\n```python\n{\n  'val': 21\n}\n```\n\n**Statistics:**\n```\n{'k': 7}\n```"
    assert parse_response(text) == ({'val': 21}, {'k': 7})
    text = "**Output:** 3\n\n**Statistics:** {`'a'`: 7, `'b'`: 5}"
    assert parse_response(text) == (3, {'a': 7, 'b': 5})
    assert parse_response('**Output:**\n`[3, 4]`\n\n**Statistics:**\n`{"a": 1}`') == (
        [3, 4],
        {'a': 1},
    )
    assert parse_response('output: `2`\nstats: {"a": 1}') == (2, {'a': 1})


def test_parse_response_brackets_inside_strings():
    output, stats = parse_response('Output: ["a]", "{b"]\nStatistics: {"k": "}"}')
    assert output == ['a]', '{b']
    assert stats == {'k': '}'}


def test_parse_literal():
    assert parse_literal('3') == 3
    assert parse_literal('-2.5') == -2.5
    assert parse_literal('(1,)') == (1,)
    assert parse_literal('1, 2') == (1, 2)
    assert parse_literal("{'a': [1, {2, 3}]}") == {'a': [1, {2, 3}]}
    assert parse_literal('set()') == set()
    assert parse_literal('{(1, 2): None}') == {(1, 2): None}
    assert parse_literal('-inf') == float('-inf')
    assert math.isnan(parse_literal('nan'))
    for text in ('x', 'f(1)', '1 + 2', '[x for x in y]', '-"a"', '', '{**a}', 'set([1])'):
        with pytest.raises(ValueError):
            parse_literal(text)


def test_rendered_answers_parse_back():
    rng = random.Random(420)

    def value(depth=0):
        kind = rng.randrange(7 if depth < 3 else 4)
        if kind == 0:
            return rng.randint(-10**6, 10**6)
        if kind == 1:
            return round(rng.uniform(-100, 100), rng.randint(0, 6))
        if kind == 2:
            return rng.choice(['', 'a', "it's", 'x"y', 'back\\slash'])
        if kind == 3:
            return rng.choice([None, True, False])
        if kind == 4:
            return [value(depth + 1) for _ in range(rng.randint(0, 4))]
        if kind == 5:
            return tuple(value(depth + 1) for _ in range(rng.randint(0, 3)))
        return {rng.choice('abcd'): value(depth + 1) for _ in range(rng.randint(0, 3))}

    for _ in range(300):
        output = value()
        names = rng.sample(['a', 'b', 'c'], rng.randint(1, 3))
        stats = {name: rng.randint(0, 49) for name in names}
        parsed_output, parsed_stats = parse_response(render_answer(output, stats))
        assert equivalent(parsed_output, output)
        assert parsed_stats == stats


def test_compare():
    test = TestCase('t0', 'x', [1], [1.0, 2], {'a': 1, 'b': 0.5})
    assert compare([1, 2], {'a': 1, 'b': 0.5}, test) == (True, True)
    assert compare((1.0000001, 2), {'a': 1, 'b': 0.50000001}, test) == (True, True)
    assert compare([1, 2], {'a': 1}, test) == (True, False)
    assert compare([1, 2], {'a': 1, 'b': 0.5, 'c': 0}, test) == (True, False)
    assert compare([2, 1], {'b': 0.5, 'a': 1}, test) == (False, True)
    assert compare(MISSING, None, test) == (False, False)
    assert compare([1, 2], {'a': True, 'b': 0.5}, test) == (True, False)
    with pytest.raises(HarnessError):
        compare(1, {}, TestCase('t1', 'x', [1]))


def test_compare_respects_the_configured_tolerance():
    test = TestCase('t0', 'x', [1], 1.0, {'a': 1})
    assert not compare(1.01, {'a': 1}, test)[0]
    assert compare(1.01, {'a': 1}, test, HarnessConfig(rel_tol=0.05))[0]


def test_task_prompt():
    instruction = verified_instruction('cf_818d')
    test = labelled('cf_818d')
    prompt = build_task_prompt(instruction, test)
    golden = FIXTURES / 'task_prompt_cf_818d.md'
    assert prompt.encode('utf-8') == golden.read_bytes()
    assert instruction.inputs_section in prompt
    assert instruction.logics_section in prompt
    assert instruction.outputs_section in prompt
    assert 'Arguments: (6, [3, 1, 4, 1, 5, 9])' in prompt
    assert prompt.rstrip().endswith('>')
    # the code and the gold labels never reach the solver
    assert fixture_source('cf_818d') not in prompt
    assert 'def ' not in prompt
    assert 'balanced_subarrays' not in prompt


def test_task_prompt_needs_a_verified_instruction():
    record = InstructionRecord('cf_818d', 'in', 'logic', 'out')
    with pytest.raises(HarnessError):
        build_task_prompt(record, labelled('cf_818d'))


def test_evaluate(worked_corpus):
    llm = ReplayChatProvider(
        {f'eval:{name}/t0': [case['response']] for name, case in WORKED_CASES.items()},
        model='demo',
    )
    records = evaluate(worked_corpus, llm)
    assert [r.function_id for r in records] == list(WORKED_CASES)
    assert [(r.output_match, r.state_match) for r in records] == [
        (case['output_match'], case['state_match']) for case in WORKED_CASES.values()
    ]
    assert {r.model for r in records} == {'demo'}
    assert all(r.error_category is None for r in records)


def test_evaluate_in_parallel_keeps_order(worked_corpus):
    responses = {f'eval:{name}/t0': [case['response']] for name, case in WORKED_CASES.items()}
    serial = evaluate(worked_corpus, ReplayChatProvider(responses))
    parallel = evaluate(worked_corpus, ReplayChatProvider(responses), jobs=4)
    assert [r.to_record() for r in parallel] == [r.to_record() for r in serial]


def test_evaluate_skips_unusable_work(worked_corpus):
    worked_corpus.put(
        InstructionRecord(
            'cf_328a',
            'in',
            'logic',
            'out',
            status='discarded',
            discard_reason='provider-failure',
        )
    )
    worked_corpus.add(TestCase('t1', 'poj_1516', [[[0, 1]]]))
    responses = {f'eval:{name}/t0': [case['response']] for name, case in WORKED_CASES.items()}
    llm = ReplayChatProvider(responses)
    records = evaluate(worked_corpus, llm)
    assert 'cf_328a' not in {r.function_id for r in records}
    assert ('poj_1516', 't1') not in {(r.function_id, r.test_id) for r in records}
    assert llm.calls_tagged('eval:cf_328a') == 0


def test_evaluate_records_provider_failures(worked_corpus):
    records = evaluate(worked_corpus.restricted(['cf_818d']), ReplayChatProvider({}))
    record, = records
    assert record.raw_response == ''
    assert not record.output_match
    assert not record.state_match


def test_aggregate(worked_corpus):
    records = [
        grade(labelled(name), case['response'], 'demo') for name, case in WORKED_CASES.items()
    ]
    labels = {name: 'medium' for name in WORKED_CASES}
    table = aggregate(records, labels)
    assert table.model == 'demo'
    overall = table.functions[OVERALL]
    assert overall.n == 7
    assert round(overall.output, 1) == 71.4
    assert round(overall.state, 1) == 28.6
    assert round(overall.both, 1) == 28.6
    assert table.tests[OVERALL] == overall
    assert table.functions['medium'] == overall
    assert table.functions['easy'] == Accuracy(0.0, 0.0, 0.0, 0)
    assert set(table.to_record()['functions']) == {'easy', 'medium', 'hard', OVERALL}


def test_gold_answers_score_full_marks():
    levels = ('easy', 'medium', 'hard')
    labels = {name: levels[i % 3] for i, name in enumerate(WORKED_CASES)}
    records = [
        grade(labelled(name), render_answer(case['gold_output'], case['gold_stats']), 'gold')
        for name, case in WORKED_CASES.items()
    ]
    table = aggregate(records, labels)
    for cells in (table.functions, table.tests):
        for level in (*levels, OVERALL):
            accuracy = cells[level]
            assert accuracy.n > 0
            assert (accuracy.output, accuracy.state, accuracy.both) == (100.0, 100.0, 100.0)


def test_both_never_exceeds_either():
    rng = random.Random(420)
    for _ in range(1000):
        records = [
            EvalRecord(
                f'fn{rng.randrange(5)}',
                f't{i}',
                'r',
                'm',
                parsed_output=1,
                parsed_stats={},
                output_match=rng.random() < 0.6,
                state_match=rng.random() < 0.4,
            )
            for i in range(rng.randint(1, 12))
        ]
        labels = {f'fn{i}': rng.choice(('easy', 'medium', 'hard')) for i in range(5)}
        table = aggregate(records, labels)
        for cells in (table.functions, table.tests):
            for accuracy in cells.values():
                assert accuracy.both <= min(accuracy.output, accuracy.state)


def test_aggregate_function_level():
    def record(fid, tid, o, s):
        return EvalRecord(fid, tid, 'r', 'm', 1 if o else MISSING, {} if s else None, o, s)

    records = [
        record('a', 't0', True, True),
        record('a', 't1', True, False),
        record('b', 't0', True, True),
        record('c', 't0', False, False),
    ]
    labels = {'a': DifficultyLabel('easy', (1.0, 2.0)), 'b': 'easy', 'c': 'hard'}
    table = aggregate(records, labels)
    assert table.functions['easy'] == Accuracy(100.0, 50.0, 50.0, 2)
    assert table.tests['easy'] == Accuracy(100.0, 200.0 / 3, 200.0 / 3, 3)
    assert table.functions['hard'] == Accuracy(0.0, 0.0, 0.0, 1)
    assert table.functions[OVERALL].n == 3
    assert table.tests[OVERALL].n == 4

    with pytest.raises(HarnessError):
        aggregate(records, {'a': 'easy'})
    with pytest.raises(HarnessError):
        aggregate(records + [EvalRecord('a', 't2', 'r', 'other')], labels)


def test_error_distribution():
    def failed(tid, category, model='m'):
        return EvalRecord('a', tid, 'r', model, error_category=category)

    records = [
        failed('t0', 'State Tracking Errors'),
        failed('t1', 'State Tracking Errors'),
        failed('t2', 'Missing Logic Elements'),
        failed('t3', UNCLASSIFIED),
        failed('t4', None),
        EvalRecord('a', 't5', 'r', 'm', 1, {}, True, True),
    ]
    dist = error_distribution(records)
    assert dist.model == 'm'
    assert list(dist.counts) == list(ERROR_CATEGORIES)
    assert dist.counts['State Tracking Errors'] == 2
    assert dist.classified == 3
    assert dist.unclassified == 1
    assert dist.pending == 1
    assert dist.percentages['State Tracking Errors'] == pytest.approx(200 / 3)
    assert sum(dist.percentages.values()) == pytest.approx(100)
    assert error_distribution([]).percentages == {c: 0.0 for c in ERROR_CATEGORIES}


def test_apportion():
    shares = apportion({'easy': 50, 'medium': 30, 'hard': 22}, 26)
    assert shares == {'easy': 13, 'medium': 8, 'hard': 5}
    assert apportion({'easy': 1, 'medium': 1, 'hard': 1}, 2) == {'easy': 1, 'medium': 1, 'hard': 0}
    assert apportion({'easy': 5, 'medium': 0, 'hard': 5}, 10) == {'easy': 5, 'medium': 0, 'hard': 5}
    rng = random.Random(420)
    for _ in range(200):
        sizes = {level: rng.randint(0, 40) for level in ('easy', 'medium', 'hard')}
        if not sum(sizes.values()):
            continue
        total = rng.randint(0, sum(sizes.values()))
        share = apportion(sizes, total)
        assert sum(share.values()) == total
        for level, n in sizes.items():
            assert abs(share[level] - total * n / sum(sizes.values())) < 1
    with pytest.raises(HarnessError):
        apportion({'easy': 0}, 1)


def test_sample_mini():
    labels = {f'fn{i:03}': ('easy', 'medium', 'hard')[i % 3] for i in range(90)}
    sample = sample_mini(labels, 30, seed=7)
    assert len(sample) == 30
    assert sample == sorted(sample)
    assert len(set(sample)) == 30
    assert sum(labels[fid] == 'easy' for fid in sample) == 10
    assert sample_mini(labels, 30, seed=7) == sample
    assert sample_mini(labels, 90) == sorted(labels)
    with pytest.raises(HarnessError):
        sample_mini(labels, 91)
    with pytest.raises(HarnessError):
        sample_mini(labels, 0)


def test_sample_mini_default_size():
    labels = {f'fn{i:03}': ('easy', 'medium', 'hard')[i % 3] for i in range(300)}
    assert len(sample_mini(labels)) == 102


def failing_record(name: str = 'cf_2018b') -> EvalRecord:
    return grade(labelled(name), WORKED_CASES[name]['response'], 'demo')


def test_judge_prompt():
    name = 'cf_2018b'
    prompt = build_judge_prompt(
        failing_record(name), anonymized(name), verified_instruction(name), labelled(name)
    )
    assert fixture_source(name) in prompt
    assert verified_instruction(name).text in prompt
    assert 'Output: 24' in prompt
    assert "Output: {'val': 21, 'and_operations': 7, 'xor_operations': 7}" in prompt
    assert list(ERROR_DEFINITIONS) == list(ERROR_CATEGORIES)
    for category, definition in ERROR_DEFINITIONS.items():
        assert f'- **{category}**: {definition}' in prompt
    assert ERROR_DEFINITIONS['Missing Logic Elements'] == (
        'omission of required components (e.g., loops, branches, edge case handling or '
        'initialization).'
    )
    assert WORKED_CASES[name]['response'] in prompt

    silent = EvalRecord(name, 't0', 'I give up.', 'demo')
    prompt = build_judge_prompt(
        silent, anonymized(name), verified_instruction(name), labelled(name)
    )
    assert 'Output: (not given)' in prompt


@pytest.mark.parametrize('name', [n for n, c in WORKED_CASES.items() if c['category']])
def test_classify_error(name):
    verdict = json.dumps({'category': WORKED_CASES[name]['category'], 'reasoning': 'see above'})
    llm = ReplayChatProvider({f'judge:{name}': [f'```json\n{verdict}\n```']})
    category = classify_error(
        failing_record(name), anonymized(name), verified_instruction(name), labelled(name), llm
    )
    assert category == WORKED_CASES[name]['category']


def test_classify_error_retries_and_gives_up():
    name = 'cf_2018b'
    args = (failing_record(name), anonymized(name), verified_instruction(name), labelled(name))
    llm = ReplayChatProvider(
        {
            f'judge:{name}': [
                'hmm',
                '{"category": "Bad Vibes"}',
                '{"category": "misordered execution"}',
            ]
        }
    )
    assert classify_error(*args, llm) == 'Misordered Execution'

    llm = ReplayChatProvider({f'judge:{name}': ['hmm'] * 5})
    assert classify_error(*args, llm) == UNCLASSIFIED
    assert llm.calls_tagged('judge:') == 3

    assert classify_error(*args, ReplayChatProvider({})) == UNCLASSIFIED


def test_classify_error_refuses_passing_records():
    name = 'cf_818d'
    record = grade(labelled(name), WORKED_CASES[name]['response'], 'demo')
    assert record.passed
    with pytest.raises(HarnessError):
        classify_error(
            record,
            anonymized(name),
            verified_instruction(name),
            labelled(name),
            ReplayChatProvider([]),
        )
