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

import json
import pathlib
import random

import pytest

from stepwise import *


FIXTURES = pathlib.Path(__file__).parent / 'fixtures'

def _worked_cases() -> dict:
    """Arguments, gold labels and grading of each worked example.

    ``response`` holds the example's recorded model transcript.
    """
    cases = json.loads((FIXTURES / 'worked_cases.json').read_text(encoding='utf-8'))
    for name, case in cases.items():
        case['response'] = (FIXTURES / 'transcripts' / f'{name}.md').read_text(encoding='utf-8')
    return cases


WORKED_CASES: dict = _worked_cases()


def fixture_source(name: str) -> str:
    return (FIXTURES / 'functions' / f'{name}.py').read_text(encoding='utf-8')


def anonymized(name: str, stats_keys: list[str] | None = None) -> SeedFunction:
    """A seed function whose source is already anonymized and instrumented."""
    source = fixture_source(name)
    if stats_keys is None:
        stats_keys = list(WORKED_CASES[name]['gold_stats'])
    return SeedFunction(
        id=name,
        source=source,
        origin=name,
        anonymized_source=source,
        stats_keys=stats_keys,
        stages={stage: 'done' for stage in DEFAULT_STAGES},
    )


def verified_instruction(function_id: str) -> InstructionRecord:
    return InstructionRecord(
        function_id,
        'Two values: a whole number n and a list of numbers.',
        'Go through the list from left to right and keep a running count as you go.',
        'You end up with one number and a small dictionary of counters.',
        [VerificationReport(True, 'covers every step', [], 100.0)],
        'verified',
    )


@pytest.fixture(autouse=True, scope='function')
def global_fixture():
    """Seed each individual test with the same seed,
    so that different runs of the same test are deterministic.
    """

    random.seed(420)
    yield


@pytest.fixture()
def worked_corpus() -> Corpus:
    """The worked examples as a finished corpus.

    Each function has one labelled test and a verified instruction.
    """
    corpus = Corpus()
    for name in WORKED_CASES:
        corpus.add(anonymized(name))
    for name, case in WORKED_CASES.items():
        corpus.add(TestCase('t0', name, case['args'], case['gold_output'], case['gold_stats']))
    for name in WORKED_CASES:
        corpus.add(verified_instruction(name))
    return corpus


@pytest.fixture()
def corpus_file(tmp_path, worked_corpus) -> pathlib.Path:
    path = tmp_path / 'corpus.jsonl'
    save(worked_corpus, path)
    return path


@pytest.fixture()
def responses_file(tmp_path) -> pathlib.Path:
    path = tmp_path / 'responses.jsonl'
    lines = [
        json.dumps(
            {'function_id': name, 'test_id': 't0', 'response': case['response'], 'model': 'demo'}
        )
        for name, case in WORKED_CASES.items()
    ]
    path.write_text('\n'.join(lines) + '\n', encoding='utf-8')
    return path
