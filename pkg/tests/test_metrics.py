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

import random

import pytest

from stepwise import *
from conftest import fixture_source


def report(source: str) -> ComplexityReport:
    return measure(parse(source))


def test_straight_line():
    r = report('def f():\n    return 0')
    assert (r.C, r.D, r.F, r.L) == (0, 0, 0, 2)
    assert r.score == 1.0


def test_single_loop():
    r = report('def f(n):\n    s=0\n    for i in range(n):\n        s+=i\n    return s')
    assert (r.C, r.D, r.F, r.L) == (1, 1, 1, 5)
    assert r.score == 8.5
    assert r.loops == 1
    assert r.conditionals == 0


def test_heap_trim_hand_count():
    r = report(fixture_source('heap_trim'))
    # for, two ifs; the ifs sit inside the loop
    assert (r.C, r.D, r.F, r.L) == (3, 2, 6, 17)
    assert r.score == 29.5


def test_decision_points():
    source = (
        'def f(n):\n'
        '    if n > 0:\n'
        '        x = 1\n'
        '    elif n < 0:\n'
        '        x = -1\n'
        '    else:\n'
        '        x = 0\n'
        '    y = 1 if n else 2\n'
        '    z = [i for i in range(n) if i % 2]\n'
        '    while n > 0 and x:\n'
        '        n -= 1\n'
        '    return x, {"y": y}\n'
    )
    r = report(source)
    # if + elif, the conditional expression, two comprehension clauses, the while
    assert r.C == 6
    assert r.conditionals == 3
    assert r.loops == 1
    assert r.D == 1
    assert r.F == 1


def test_calls_of_every_kind():
    source = (
        'def f(A):\n'
        '    def g(x):\n'
        '        return x + 1\n'
        '    A.append(g(len(A)))\n'
        '    return A, {}\n'
    )
    assert report(source).F == 3


def test_nested_definitions_add_no_depth():
    flat = report('def f(n):\n    def g(x):\n        return x\n    return g(n), {}\n')
    assert flat.D == 0
    looped = report(
        'def f(n):\n    def g(x):\n        for i in x:\n            pass\n    return g(n), {}\n'
    )
    assert looped.D == 1
    assert looped.C == 1


def test_depth_counts_nested_bodies():
    source = (
        'def f(A):\n'
        '    for x in A:\n'
        '        for y in A:\n'
        '            if x < y:\n'
        '                return x, {}\n'
        '    return 0, {}\n'
    )
    assert report(source).D == 3


def test_measure_rejects_violations():
    with pytest.raises(SubsetError):
        report('def f(x):\n    return print(x)\n')


def _random_body(rng: random.Random, depth: int, indent: str) -> list[str]:
    lines = []
    for _ in range(rng.randint(1, 3)):
        choice = rng.randrange(5 if depth < 3 else 2)
        if choice == 0:
            lines.append(f'{indent}x = x + {rng.randint(0, 9)}')
        elif choice == 1:
            lines.append(f'{indent}x = max(x, len(A))')
        elif choice == 2:
            lines.append(f'{indent}for i in range({rng.randint(1, 4)}):')
            lines.extend(_random_body(rng, depth + 1, indent + '    '))
        elif choice == 3:
            lines.append(f'{indent}if x > {rng.randint(0, 9)}:')
            lines.extend(_random_body(rng, depth + 1, indent + '    '))
        else:
            lines.append(f'{indent}while x > 100:')
            lines.extend(_random_body(rng, depth + 1, indent + '    '))
            lines.append(f'{indent}    x = x - 1')
    return lines


def random_function(rng: random.Random) -> str:
    body = ['    x = 0', *_random_body(rng, 0, '    '), '    return x, {"x": x}']
    return 'def f(A):\n' + '\n'.join(body) + '\n'


def test_score_identity():
    rng = random.Random(420)
    for _ in range(1000):
        r = report(random_function(rng))
        assert r.C >= 0 and r.D >= 0 and r.F >= 0 and r.L >= 1
        assert r.score == r.D * 3 + r.F * 2 + r.C * 1 + r.L * 0.5


def test_wrapping_adds_one_level():
    rng = random.Random(421)
    for _ in range(200):
        tree = parse(random_function(rng))
        before = measure(tree)
        wrapped = parse(str(utils.wrap_body(tree.root)))
        after = measure(wrapped)
        assert after.D == before.D + 1
        assert after.C == before.C + 1
        assert after.L == before.L + 1
        # three for the extra level, plus the new decision point and line
        assert after.score == before.score + 3 + 1 + 0.5


def test_adding_a_loop_never_lowers_score():
    rng = random.Random(422)
    for _ in range(200):
        source = random_function(rng)
        lines = source.splitlines()
        extra = [*lines[:1], '    for j in range(2):', '        x = x + j', *lines[1:]]
        assert measure(parse('\n'.join(extra) + '\n')).score >= measure(parse(source)).score


def test_stratify_terciles():
    labels = stratify([(str(i), float(i)) for i in range(1, 10)])
    expected = ['easy'] * 3 + ['medium'] * 3 + ['hard'] * 3
    assert [labels[str(i)].level for i in range(1, 10)] == expected
    assert labels['1'].thresholds == (3.0, 6.0)


def test_stratify_ties_go_down():
    labels = stratify([('a', 5.0), ('b', 5.0), ('c', 5.0), ('d', 5.0)])
    assert {label.level for label in labels.values()} == {'easy'}


def test_stratify_repeated_scores():
    scores = [1, 1, 1, 2, 2, 2, 3, 3, 3]
    labels = stratify([(f'id{i}', s) for i, s in enumerate(scores)])
    expected = ['easy'] * 3 + ['medium'] * 3 + ['hard'] * 3
    assert [labels[f'id{i}'].level for i in range(9)] == expected
    assert labels['id0'].thresholds == (1, 2)


def test_stratify_is_monotone_and_order_independent():
    rng = random.Random(420)
    for _ in range(50):
        pairs = [(f'id{i}', float(rng.randint(0, 20))) for i in range(rng.randint(1, 40))]
        labels = stratify(pairs)
        shuffled = pairs[:]
        rng.shuffle(shuffled)
        assert stratify(shuffled) == labels
        scores = dict(pairs)
        for a in scores:
            for b in scores:
                if scores[a] < scores[b]:
                    assert labels[a].rank <= labels[b].rank


def test_stratify_empty():
    with pytest.raises(CorpusError):
        stratify([])


def test_corpus_summary():
    reports = {
        'a': report('def f(n):\n    s=0\n    for i in range(n):\n        s+=i\n    return s'),
        'b': report('def f():\n    return 0'),
    }
    summary = corpus_summary(reports, {'a': 4, 'b': 2}, ['one two three', 'four'])
    assert summary.functions == 2
    assert summary.tests == 6
    assert summary.mean_tests == 3.0
    assert summary.mean_C == 0.5
    assert summary.loops == 1
    assert summary.calls == 1
    assert summary.mean_instruction_words == 2.0
    assert summary.mean_instruction_chars == 8.5


def test_profile_record():
    r = report(fixture_source('heap_trim'))
    profile = FunctionProfile('heap_trim', r, DifficultyLabel('hard', (1.0, 2.0)))
    record = profile.to_record()
    assert record['function_id'] == 'heap_trim'
    assert record['level'] == 'hard'
    assert record['score'] == 29.5
