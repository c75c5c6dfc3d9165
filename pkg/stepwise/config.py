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
import os
import pathlib
from collections.abc import Mapping
from dataclasses import dataclass, field, fields, replace
from typing import Any

from .corpus import FilterPolicy
from .errors import ConfigError
from .interpreter import Limits


__all__ = (
    'PROMPTS',
    'STAGE_PLACEHOLDERS',
    'PipelineConfig',
    'HarnessConfig',
    'ProviderConfig',
    'Config',
)

PROMPTS = pathlib.Path(__file__).parent / 'prompts'

#: Placeholders each generation template must contain.
STAGE_PLACEHOLDERS: dict[str, tuple[str, ...]] = {
    'anonymize': ('function',),
    'evolve': ('original_function',),
    'describe': ('function',),
    'verify': ('function_code', 'description'),
}


def _positive(obj: Any, *names: str) -> None:
    for name in names:
        value = getattr(obj, name)
        if isinstance(value, bool) or not isinstance(value, (int, float)) or value <= 0:
            raise ConfigError(f'{name} must be positive, not {value!r}')


def _from_mapping(cls: Any, data: Mapping[str, Any], section: str) -> Any:
    if not isinstance(data, Mapping):
        raise ConfigError(f'[{section}] must be an object')
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f'Unknown key(s) in [{section}]: {", ".join(unknown)}')
    try:
        return cls(**data)
    except TypeError as e:
        raise ConfigError(f'[{section}]: {e}') from None


@dataclass(frozen=True)
class PipelineConfig:
    """Settings for the generation pipeline.

    Attributes
    ----------
    evolution_turns: :class:`int`
        Evolution turns applied to each function
    verification_turns: :class:`int`
        Verification rounds before an instruction is discarded
    max_retries: :class:`int`
        Attempts per stage call before giving up on a function
    temperature: Optional[:class:`float`]
        Generation temperature, the provider default when unset
    max_tokens: Optional[:class:`int`]
        Generation token budget, the provider default when unset
    templates: Dict[:class:`str`, :class:`str`]
        Stage name to template file, overriding the packaged templates
    jobs: :class:`int`
        Functions processed concurrently
    """

    evolution_turns: int = 1
    verification_turns: int = 3
    max_retries: int = 3
    temperature: float | None = None
    max_tokens: int | None = None
    templates: dict[str, str] = field(default_factory=dict)
    jobs: int = 1

    def __post_init__(self) -> None:
        _positive(self, 'evolution_turns', 'verification_turns', 'max_retries', 'jobs')
        unknown = sorted(set(self.templates) - set(STAGE_PLACEHOLDERS))
        if unknown:
            raise ConfigError(f'No pipeline stage named {", ".join(unknown)}')
        for stage in STAGE_PLACEHOLDERS:
            self.template(stage)

    def template(self, stage: str) -> str:
        """The text of a stage's template.

        Raises
        ------
        :class:`~stepwise.ConfigError`
            The template cannot be read or lacks a placeholder.
        """
        if stage in self.templates:
            path = pathlib.Path(self.templates[stage])
        else:
            path = PROMPTS / f'{stage}.txt'
        try:
            text = path.read_text(encoding='utf-8')
        except OSError as e:
            raise ConfigError(f'Cannot read the {stage} template {path}: {e.strerror}') from None
        for name in STAGE_PLACEHOLDERS[stage]:
            if '{' + name + '}' not in text:
                raise ConfigError(f'The {stage} template lacks the {{{name}}} placeholder')
        return text


@dataclass(frozen=True)
class HarnessConfig:
    """Settings for evaluation.

    Attributes
    ----------
    max_output_tokens: :class:`int`
        Token budget for the evaluated model
    temperature: Optional[:class:`float`]
        Evaluation temperature, the provider default when unset
    rel_tol: :class:`float`
        Relative tolerance for float comparison after rounding
    mini_size: :class:`int`
        Functions in the stratified mini benchmark
    judge_retries: :class:`int`
        Attempts to get a parseable verdict from the judge
    """

    max_output_tokens: int = 16384
    temperature: float | None = None
    rel_tol: float = 1e-6
    mini_size: int = 102
    judge_retries: int = 3

    def __post_init__(self) -> None:
        _positive(self, 'max_output_tokens', 'rel_tol', 'mini_size', 'judge_retries')


@dataclass(frozen=True)
class ProviderConfig:
    """Where model calls go.

    ``kind`` is ``http`` for an OpenAI-compatible endpoint or ``replay`` for canned
    responses read from ``replay_path``.
    """

    kind: str = 'http'
    api_base: str | None = None
    api_key: str | None = field(default=None, repr=False)
    model: str | None = None
    embedding_model: str | None = None
    max_inflight: int = 4
    timeout: float = 60.0
    max_retries: int = 5
    replay_path: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in ('http', 'replay'):
            raise ConfigError(f'Unknown provider kind {self.kind!r}')
        _positive(self, 'max_inflight', 'timeout', 'max_retries')

    @classmethod
    def from_env(cls, environ: Mapping[str, str] | None = None) -> ProviderConfig:
        """Reads ``STEPWISE_*`` environment variables."""
        env = os.environ if environ is None else environ
        try:
            return cls(
                api_base=env.get('STEPWISE_API_BASE'),
                api_key=env.get('STEPWISE_API_KEY'),
                model=env.get('STEPWISE_MODEL'),
                embedding_model=env.get('STEPWISE_EMBEDDING_MODEL'),
                max_inflight=int(env.get('STEPWISE_MAX_INFLIGHT', 4)),
                timeout=float(env.get('STEPWISE_TIMEOUT', 60.0)),
            )
        except ValueError as e:
            raise ConfigError(f'Invalid provider environment: {e}') from None

    @classmethod
    def from_file(
        cls, path: str | os.PathLike[str], environ: Mapping[str, str] | None = None
    ) -> ProviderConfig:
        """Reads a JSON provider document; unset settings fall back to the environment.

        A relative ``replay_path`` is taken relative to the document.
        """
        data = _read_json(path)
        base = cls.from_env(environ)
        merged = {f.name: getattr(base, f.name) for f in fields(cls)}
        config = _from_mapping(cls, {**merged, **data}, 'provider')
        if config.replay_path is not None:
            replay_path = pathlib.Path(path).parent / config.replay_path
            config = replace(config, replay_path=str(replay_path))
        return config


def _read_json(path: str | os.PathLike[str]) -> dict[str, Any]:
    try:
        data = json.loads(pathlib.Path(path).read_text(encoding='utf-8'))
    except OSError as e:
        raise ConfigError(f'Cannot read {path}: {e.strerror}') from None
    except ValueError as e:
        raise ConfigError(f'{path} is not valid JSON: {e}') from None
    if not isinstance(data, dict):
        raise ConfigError(f'{path} must hold a JSON object')
    return data


@dataclass(frozen=True)
class Config:
    """All settings, as loaded from ``--config``."""

    limits: Limits = field(default_factory=Limits)
    policy: FilterPolicy = field(default_factory=FilterPolicy)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    harness: HarnessConfig = field(default_factory=HarnessConfig)
    provider: ProviderConfig = field(default_factory=ProviderConfig.from_env)

    _SECTIONS = {
        'limits': Limits,
        'policy': FilterPolicy,
        'pipeline': PipelineConfig,
        'harness': HarnessConfig,
        'provider': ProviderConfig,
    }

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> Config:
        unknown = sorted(set(data) - set(cls._SECTIONS))
        if unknown:
            raise ConfigError(f'Unknown configuration section(s): {", ".join(unknown)}')
        sections = {
            name: _from_mapping(kind, data[name], name)
            for name, kind in cls._SECTIONS.items()
            if name in data
        }
        return cls(**sections)

    @classmethod
    def load(cls, path: str | os.PathLike[str] | None) -> Config:
        """Reads a JSON configuration file; ``None`` gives the defaults."""
        if path is None:
            return cls()
        return cls.from_mapping(_read_json(path))
