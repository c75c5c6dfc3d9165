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

import argparse
import dataclasses
import importlib.metadata
import json
import logging
import platform
import sys
from collections.abc import Callable, Iterable, Mapping, Sequence
from pathlib import Path
from typing import Any, NoReturn

import stepwise
from stepwise.config import Config, ProviderConfig
from stepwise.corpus import (
    Corpus,
    EvalRecord,
    FilterPolicy,
    dedup,
    drop_sparse,
    filter_tests,
    load,
    read_records,
    save,
    write_records,
)
from stepwise.errors import *
from stepwise.harness import (
    aggregate,
    classify_error,
    error_distribution,
    evaluate,
    grade,
    sample_mini,
)
from stepwise.interpreter import Interpreter, Limits
from stepwise.metrics import FunctionProfile, corpus_summary, measure, stratify
from stepwise.pipeline import DEFAULT_STAGES, EventLog, Pipeline, gold_label, parse_stages
from stepwise.providers import ChatProvider, chat_provider, embedding_provider
from stepwise.render import TableRenderer, renderer_for


log = logging.getLogger('stepwise')

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_PROVIDER = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f'{self.prog}: error: {message}\n')


def _common() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--corpus', type=Path, help='Corpus JSONL file')
    common.add_argument('--out', type=Path, help='Where to write the output (default: stdout)')
    common.add_argument('--seed', type=int, default=0, help='Seed for every random choice')
    common.add_argument('--config', type=Path, help='JSON configuration file')
    common.add_argument(
        '--jobs', type=int, help='Parallel provider requests (default: 1); run and filter use one'
    )
    common.add_argument(
        '-v', '--verbose', action='count', default=0, help='More logging; repeat for debug'
    )
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog='stepwise', description='Instruction generation and evaluation toolkit')
    commands = parser.add_subparsers(
        dest='command', required=True, metavar='command', parser_class=_Parser
    )

    analyze = commands.add_parser(
        'analyze', parents=[common], help='Measure and stratify functions'
    )
    analyze.add_argument('--summary', type=Path, help='Also write corpus statistics as JSON')
    analyze.add_argument('--format', choices=('table', 'csv', 'records'), default='table')

    run = commands.add_parser('run', parents=[common], help='Execute tests and write gold labels')
    run.add_argument('--limits', type=Limits.from_string, help='steps=N,recursion=M,collection=K')

    filter_ = commands.add_parser(
        'filter', parents=[common], help='Drop unusable tests and functions'
    )
    filter_.add_argument('--policy', type=Path, help='JSON filter policy')
    filter_.add_argument(
        '--dedup', action='store_true', help='Also remove near-duplicate functions'
    )
    filter_.add_argument('--provider', type=Path, help='Provider configuration for embeddings')

    gen = commands.add_parser('gen', parents=[common], help='Run the generation pipeline')
    gen.add_argument(
        '--stages', type=parse_stages, default=DEFAULT_STAGES, help='Comma separated stages'
    )
    gen.add_argument('--provider', type=Path, help='Provider configuration file')
    gen.add_argument('--events', type=Path, help='Append stage events to this JSONL file')

    eval_ = commands.add_parser('eval', parents=[common], help='Grade model responses')
    source = eval_.add_mutually_exclusive_group(required=True)
    source.add_argument('--responses', type=Path, help='JSONL file of recorded responses')
    source.add_argument('--provider', type=Path, help='Provider configuration for live evaluation')
    eval_.add_argument('--model', default='unknown', help='Model name for responses without one')
    eval_.add_argument(
        '--classify', action='store_true', help='Classify failures with a judge model'
    )
    eval_.add_argument('--judge', type=Path, help='Provider configuration for the judge')

    report = commands.add_parser('report', parents=[common], help='Tabulate graded records')
    report.add_argument('evals', nargs='+', type=Path, help='Eval record files')
    report.add_argument('--format', choices=('table', 'csv', 'records'), default='table')

    mini = commands.add_parser(
        'sample-mini', parents=[common], help='Draw the stratified mini benchmark'
    )
    mini.add_argument('--size', type=int, help='Number of functions')

    commands.add_parser('version', help='Show version and platform information')

    return parser


# ==== helpers ====


def _require_corpus(args: argparse.Namespace) -> Corpus:
    if args.corpus is None:
        raise ConfigError(f'{args.command} needs --corpus')
    return load(args.corpus)


def _write_text(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text, encoding='utf-8')


def _write_records(records: Iterable[Mapping[str, Any]], out: Path | None) -> None:
    if out is None:
        for record in records:
            sys.stdout.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + '\n')
    else:
        write_records(out, records)


def _write_corpus(corpus: Corpus, out: Path | None) -> None:
    if out is None:
        _write_records((r.to_record() for r in corpus.records()), None)
    else:
        save(corpus, out)


def _summary(line: str) -> None:
    print(line, file=sys.stderr)


def _profiles(corpus: Corpus) -> list[FunctionProfile]:
    reports = {fid: measure(fn.tree) for fid, fn in corpus.functions.items()}
    labels = stratify((fid, r.score) for fid, r in reports.items())
    return [FunctionProfile(fid, reports[fid], labels[fid]) for fid in reports]


def _chat(path: Path | None, config: Config) -> ChatProvider:
    provider = ProviderConfig.from_file(path) if path is not None else config.provider
    return chat_provider(provider)


# ==== commands ====


def cmd_analyze(args: argparse.Namespace, config: Config) -> int:
    corpus = _require_corpus(args)
    profiles = _profiles(corpus)
    _write_text(renderer_for(args.format).render(profiles), args.out)

    instructions = [r.text for r in corpus.instructions.values() if r.verified]
    counts = {fid: len(corpus.tests_for(fid)) for fid in corpus.functions}
    summary = corpus_summary({p.function_id: p.report for p in profiles}, counts, instructions)
    if args.summary is not None:
        text = json.dumps(summary.to_record(), indent=2, sort_keys=True)
        args.summary.write_text(text + '\n', encoding='utf-8')
    sys.stderr.write(TableRenderer().render([summary]))
    return EXIT_OK


def cmd_run(args: argparse.Namespace, config: Config) -> int:
    corpus = _require_corpus(args)
    limits = args.limits or config.limits
    interpreter = Interpreter(limits)
    labelled = dropped = 0
    for fid, fn in corpus.functions.items():
        try:
            # one worker; --jobs only applies to provider stages
            result = gold_label(fn, corpus.tests_for(fid), limits, interpreter=interpreter)
        except StageError as e:
            log.warning('%s', e)
            continue
        for test_id, status in result.dropped.items():
            _summary(f'{fid}/{test_id}: {status}')
        corpus.set_tests(fid, result.labelled)
        labelled += len(result.labelled)
        dropped += len(result.dropped)
    _write_corpus(corpus, args.out)
    _summary(f'labelled {labelled} test(s), dropped {dropped}')
    return EXIT_OK


def cmd_filter(args: argparse.Namespace, config: Config) -> int:
    corpus = _require_corpus(args)
    policy = FilterPolicy.from_mapping(_read_json(args.policy)) if args.policy else config.policy
    interpreter = Interpreter(config.limits)
    tests_before = len(corpus.tests)
    for fid, fn in corpus.functions.items():
        tests = corpus.tests_for(fid)
        results = interpreter.run_suite(fn.tree, tests)
        verdict = filter_tests(fn, tests, results, policy)
        kept = set(verdict.kept)
        corpus.set_tests(fid, [t for t in tests if t.id in kept])
    functions_before = len(corpus)
    if args.dedup:
        provider = ProviderConfig.from_file(args.provider) if args.provider else config.provider
        survivors = dedup(list(corpus.functions.values()), embedding_provider(provider), policy)
        corpus = corpus.restricted(fn.id for fn in survivors)
    corpus = drop_sparse(corpus, policy)
    _write_corpus(corpus, args.out)
    _summary(
        f'kept {len(corpus)} of {functions_before} function(s) '
        f'and {len(corpus.tests)} of {tests_before} test(s)'
    )
    return EXIT_OK


def cmd_gen(args: argparse.Namespace, config: Config) -> int:
    corpus = _require_corpus(args)
    pipeline_config = config.pipeline
    if args.jobs:
        pipeline_config = dataclasses.replace(pipeline_config, jobs=args.jobs)
    with _chat(args.provider, config) as llm, EventLog(args.events) as events:
        pipeline = Pipeline(
            llm, pipeline_config, limits=config.limits, policy=config.policy, events=events
        )
        out = pipeline.run(corpus, args.stages)
    _write_corpus(out, args.out)
    verified = sum(1 for r in out.instructions.values() if r.verified)
    failed = sum(1 for fn in out.functions.values() if 'failed' in fn.stages.values())
    _summary(
        f'{len(out)} function(s), {verified} verified instruction(s), '
        f'{failed} with a failed stage'
    )
    return EXIT_OK


def _graded_responses(path: Path, corpus: Corpus, model: str, config: Config) -> list[EvalRecord]:
    records = []
    for lineno, obj in read_records(path):
        key = (obj.get('function_id'), obj.get('test_id'))
        test = corpus.tests.get(key)
        if test is None:
            raise CorpusError(
                f'no test {key[0]}/{key[1]} in the corpus', path=str(path), line=lineno
            )
        response = obj.get('response')
        if not isinstance(response, str):
            raise CorpusError(
                'a response record needs a string response', path=str(path), line=lineno
            )
        records.append(grade(test, response, obj.get('model', model), config.harness))
    return records


def _classified(
    records: list[EvalRecord], corpus: Corpus, judge: ChatProvider, config: Config
) -> list[EvalRecord]:
    out = []
    for record in records:
        instruction = corpus.instruction_for(record.function_id)
        if record.passed or instruction is None:
            out.append(record)
            continue
        category = classify_error(
            record,
            corpus.functions[record.function_id],
            instruction,
            corpus.tests[(record.function_id, record.test_id)],
            judge,
            config.harness,
        )
        out.append(dataclasses.replace(record, error_category=category))
    return out


def cmd_eval(args: argparse.Namespace, config: Config) -> int:
    corpus = _require_corpus(args)
    if args.responses is not None:
        records = _graded_responses(args.responses, corpus, args.model, config)
    else:
        with _chat(args.provider, config) as llm:
            records = evaluate(corpus, llm, config.harness, jobs=args.jobs or 1)
    if args.classify:
        with _chat(args.judge or args.provider, config) as judge:
            records = _classified(records, corpus, judge, config)
    _write_records((r.to_record() for r in records), args.out)

    labels = {p.function_id: p.label for p in _profiles(corpus)}
    tables = []
    for model in sorted({r.model for r in records}):
        tables.append(aggregate([r for r in records if r.model == model], labels, model=model))
    sys.stderr.write(TableRenderer().render(tables))
    return EXIT_OK


def cmd_report(args: argparse.Namespace, config: Config) -> int:
    corpus = _require_corpus(args)
    labels = {p.function_id: p.label for p in _profiles(corpus)}
    records: list[EvalRecord] = []
    for path in args.evals:
        for lineno, obj in read_records(path):
            try:
                records.append(EvalRecord.from_record(obj))
            except CorpusError as e:
                raise CorpusError(str(e), path=str(path), line=lineno) from None
    models = sorted({r.model for r in records})
    by_model = {m: [r for r in records if r.model == m] for m in models}
    items: list[Any] = [aggregate(by_model[m], labels, model=m) for m in models]
    items.extend(error_distribution(by_model[m], m) for m in models)
    _write_text(renderer_for(args.format).render(items), args.out)
    _summary(f'{len(records)} record(s) from {len(models)} model(s)')
    return EXIT_OK


def cmd_sample_mini(args: argparse.Namespace, config: Config) -> int:
    corpus = _require_corpus(args)
    labels = {p.function_id: p.label for p in _profiles(corpus)}
    size = config.harness.mini_size if args.size is None else args.size
    chosen = sample_mini(labels, size, args.seed)
    _write_corpus(corpus.restricted(chosen), args.out)
    by_level = {
        level: sum(1 for fid in chosen if labels[fid].level == level) for level in stepwise.LEVELS
    }
    _summary('sampled ' + ', '.join(f'{n} {level}' for level, n in by_level.items()))
    return EXIT_OK


def _read_json(path: Path) -> dict[str, Any]:
    try:
        data = json.loads(path.read_text(encoding='utf-8'))
    except (OSError, ValueError) as e:
        raise ConfigError(f'Cannot read {path}: {e}') from None
    if not isinstance(data, dict):
        raise ConfigError(f'{path} must hold a JSON object')
    return data


COMMANDS: dict[str, Callable[[argparse.Namespace, Config], int]] = {
    'analyze': cmd_analyze,
    'run': cmd_run,
    'filter': cmd_filter,
    'gen': cmd_gen,
    'eval': cmd_eval,
    'report': cmd_report,
    'sample-mini': cmd_sample_mini,
}


def _configure_logging(verbosity: int) -> None:
    level = logging.WARNING if verbosity == 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(
        level=level, format='%(asctime)s %(levelname)s %(name)s: %(message)s', stream=sys.stderr
    )


def main(argv: Sequence[str] | None = None) -> int:
    """Runs one command and returns its exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except ConfigError as e:
        # raised by --limits and --stages converters
        parser.error(str(e))
    if args.command == 'version':
        show_version()
        return EXIT_OK
    _configure_logging(args.verbose)
    try:
        config = Config.load(args.config)
        if args.jobs is not None and args.jobs < 1:
            raise ConfigError('--jobs must be positive')
        return COMMANDS[args.command](args, config)
    except ConfigError as e:
        _summary(f'stepwise {args.command}: {e}')
        return EXIT_USAGE
    except ProviderError as e:
        _summary(f'stepwise {args.command}: provider error: {e}')
        return EXIT_PROVIDER
    except StepwiseError as e:
        _summary(f'stepwise {args.command}: {e}')
        return EXIT_DATA
    except OSError as e:
        _summary(f'stepwise {args.command}: {e}')
        return EXIT_DATA


def show_version() -> None:
    version_info = sys.version_info
    stepwise_version_info = stepwise.version_info
    entries: list[str] = [
        f'- Python v{version_info.major}.{version_info.minor}.{version_info.micro}'
        f'-{version_info.releaselevel}.{version_info.serial}',
        f'- stepwise v{stepwise_version_info.major}.{stepwise_version_info.minor}.'
        f'{stepwise_version_info.micro}-{stepwise_version_info.releaselevel}'
        f'.{stepwise_version_info.serial}',
    ]
    if stepwise_version_info.releaselevel != 'final':
        try:
            version = importlib.metadata.version('stepwise')
        except importlib.metadata.PackageNotFoundError:
            pass
        else:
            entries.append(f'    - stepwise metadata: v{version}')
    uname = platform.uname()
    entries.append(f'- system info: {uname.system} {uname.release} {uname.version}')
    print('\n'.join(entries))


if __name__ == '__main__':
    sys.exit(main())
