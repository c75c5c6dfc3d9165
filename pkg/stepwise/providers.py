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

import abc
import hashlib
import json
import logging
import re
import threading
import time
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Any

import httpx
import numpy as np

from .errors import ConfigError, ProviderError


if TYPE_CHECKING:
    from .config import ProviderConfig


__all__ = (
    'Message',
    'ChatParams',
    'ChatProvider',
    'HTTPChatProvider',
    'ReplayChatProvider',
    'EmbeddingProvider',
    'HTTPEmbeddingProvider',
    'StaticEmbeddingProvider',
    'HashingEmbeddingProvider',
    'chat_provider',
    'embedding_provider',
)

log = logging.getLogger(__name__)

#: A chat message: ``(role, text)``.
Message = tuple[str, str]

RETRIABLE_STATUS = frozenset({408, 409, 429, 500, 502, 503, 504})
MAX_DELAY = 60.0


@dataclass(frozen=True)
class ChatParams:
    """Decoding parameters. ``None`` leaves the provider's default in place."""

    temperature: float | None = None
    max_tokens: int | None = None

    def to_payload(self) -> dict[str, Any]:
        payload: dict[str, Any] = {}
        if self.temperature is not None:
            payload['temperature'] = self.temperature
        if self.max_tokens is not None:
            payload['max_tokens'] = self.max_tokens
        return payload


class ChatProvider(abc.ABC):
    """Something that answers chat messages.

    Attributes
    ----------
    model: :class:`str`
        The model name recorded next to graded responses
    """

    model: str = 'unknown'

    @abc.abstractmethod
    def send(
        self,
        messages: Sequence[Message],
        params: ChatParams | None = None,
        *,
        tag: str | None = None,
    ) -> str:
        """Sends a conversation and returns the reply text.

        Parameters
        ----------
        messages: Sequence[Tuple[:class:`str`, :class:`str`]]
            ``(role, text)`` pairs
        params: Optional[:class:`ChatParams`]
            Decoding parameters
        tag: Optional[:class:`str`]
            Identifies the request, e.g. ``anonymize:poj-1852``. Live providers ignore it.

        Raises
        ------
        :class:`~stepwise.ProviderError`
            The request failed.
        """
        raise NotImplementedError

    def close(self) -> None:
        pass

    def __enter__(self) -> ChatProvider:
        return self

    def __exit__(self, *exc_info: Any) -> None:
        self.close()


class _HTTPClient:
    """POSTs JSON to an OpenAI-compatible endpoint with bounded exponential backoff.

    At most ``max_inflight`` requests are in flight at once across threads.
    """

    def __init__(
        self,
        base_url: str,
        api_key: str | None,
        *,
        timeout: float = 60.0,
        max_retries: int = 5,
        backoff: float = 1.0,
        max_inflight: int = 4,
        transport: httpx.BaseTransport | None = None,
    ) -> None:
        headers = {'Content-Type': 'application/json'}
        if api_key:
            headers['Authorization'] = f'Bearer {api_key}'
        self._client = httpx.Client(
            base_url=base_url.rstrip('/'), headers=headers, timeout=timeout, transport=transport
        )
        self._inflight = threading.BoundedSemaphore(max_inflight)
        self.max_retries = max_retries
        self.backoff = backoff
        self._sleep = time.sleep

    def post(self, path: str, payload: dict[str, Any]) -> Any:
        last: str = 'no attempt made'
        for attempt in range(self.max_retries + 1):
            if attempt:
                delay = min(self.backoff * 2 ** (attempt - 1), MAX_DELAY)
                log.warning('retrying %s (attempt %d) in %.1fs: %s', path, attempt + 1, delay, last)
                self._sleep(delay)
            try:
                with self._inflight:
                    response = self._client.post(path, json=payload)
            except httpx.TransportError as e:
                last = f'{type(e).__name__}: {e}'
                continue
            if response.status_code in RETRIABLE_STATUS:
                last = f'HTTP {response.status_code}'
                continue
            if response.status_code >= 400:
                raise ProviderError(
                    f'HTTP {response.status_code}: {response.text[:200]}', retriable=False
                )
            try:
                return response.json()
            except ValueError:
                raise ProviderError('Response body is not JSON', retriable=False) from None
        raise ProviderError(f'Gave up after {self.max_retries + 1} attempts: {last}')

    def close(self) -> None:
        self._client.close()


class HTTPChatProvider(ChatProvider):
    """A chat provider speaking the OpenAI-compatible ``/chat/completions`` protocol."""

    def __init__(
        self, base_url: str, model: str, api_key: str | None = None, **options: Any
    ) -> None:
        self.model = model
        self._http = _HTTPClient(base_url, api_key, **options)

    def send(
        self,
        messages: Sequence[Message],
        params: ChatParams | None = None,
        *,
        tag: str | None = None,
    ) -> str:
        payload = {
            'model': self.model,
            'messages': [{'role': role, 'content': text} for role, text in messages],
            **(params or ChatParams()).to_payload(),
        }
        data = self._http.post('/chat/completions', payload)
        try:
            content = data['choices'][0]['message']['content']
        except (KeyError, IndexError, TypeError):
            raise ProviderError('Malformed chat completion', retriable=False) from None
        if not isinstance(content, str):
            raise ProviderError('Chat completion has no text content', retriable=False)
        return content

    def close(self) -> None:
        self._http.close()


class ReplayChatProvider(ChatProvider):
    """Replays canned responses, for offline runs and tests.

    Responses are either one list served in call order, or lists keyed by request
    tag, each served in order. Every call is recorded in :attr:`calls`.

    Attributes
    ----------
    calls: List[Tuple[Optional[:class:`str`], Tuple[Message, ...]]]
        ``(tag, messages)`` for every request received
    """

    def __init__(
        self, responses: Sequence[str] | Mapping[str, Sequence[str]], model: str = 'replay'
    ) -> None:
        self.model = model
        self._sequential = None if isinstance(responses, Mapping) else list(responses)
        self._tagged: dict[str, list[str]] = {}
        if isinstance(responses, Mapping):
            self._tagged = {tag: list(texts) for tag, texts in responses.items()}
        self._lock = threading.Lock()
        self.calls: list[tuple[str | None, tuple[Message, ...]]] = []

    @classmethod
    def from_file(cls, path: str | Path) -> ReplayChatProvider:
        """Loads ``{"model": ..., "responses": [...] | {tag: [...]}}`` from a JSON file."""
        try:
            document = json.loads(Path(path).read_text(encoding='utf-8'))
            responses = document['responses']
        except (OSError, ValueError, KeyError, TypeError) as e:
            raise ConfigError(f'Cannot read replay responses from {path}: {e}') from None
        if isinstance(responses, Mapping):
            responses = {
                tag: [texts] if isinstance(texts, str) else texts
                for tag, texts in responses.items()
            }
        return cls(responses, document.get('model', 'replay'))

    def send(
        self,
        messages: Sequence[Message],
        params: ChatParams | None = None,
        *,
        tag: str | None = None,
    ) -> str:
        with self._lock:
            self.calls.append((tag, tuple(messages)))
            if self._sequential is not None:
                queue = self._sequential
            else:
                queue = self._tagged.get(tag or '', [])
            if not queue:
                raise ProviderError(
                    f'No replay response left for {tag or "request"}', retriable=False
                )
            return queue.pop(0)

    def calls_tagged(self, prefix: str) -> int:
        """How many requests had a tag starting with ``prefix``."""
        return sum(1 for tag, _ in self.calls if tag is not None and tag.startswith(prefix))


# ==== embeddings ====


class EmbeddingProvider(abc.ABC):
    """Maps texts to fixed-dimension vectors."""

    @abc.abstractmethod
    def embed(self, texts: Sequence[str]) -> np.ndarray:
        """Returns an ``(len(texts), dim)`` array.

        Raises
        ------
        :class:`~stepwise.ProviderError`
            The embeddings could not be obtained.
        """
        raise NotImplementedError

    def close(self) -> None:
        pass


class HTTPEmbeddingProvider(EmbeddingProvider):
    """Embeddings from an OpenAI-compatible ``/embeddings`` endpoint."""

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str | None = None,
        *,
        batch_size: int = 64,
        **options: Any,
    ) -> None:
        self.model = model
        self.batch_size = batch_size
        self._http = _HTTPClient(base_url, api_key, **options)

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        rows: list[list[float]] = []
        for start in range(0, len(texts), self.batch_size):
            batch = list(texts[start : start + self.batch_size])
            data = self._http.post('/embeddings', {'model': self.model, 'input': batch})
            try:
                items = sorted(data['data'], key=lambda item: item['index'])
                rows.extend(item['embedding'] for item in items)
            except (KeyError, TypeError):
                raise ProviderError('Malformed embedding response', retriable=False) from None
        if len(rows) != len(texts):
            raise ProviderError(
                f'Expected {len(texts)} embeddings, got {len(rows)}', retriable=False
            )
        return np.asarray(rows, dtype=np.float64).reshape(len(texts), -1)

    def close(self) -> None:
        self._http.close()


class StaticEmbeddingProvider(EmbeddingProvider):
    """Looks vectors up by exact text."""

    def __init__(self, vectors: Mapping[str, Sequence[float]]) -> None:
        self.vectors = {text: np.asarray(vec, dtype=np.float64) for text, vec in vectors.items()}

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        try:
            return np.stack([self.vectors[text] for text in texts]) if texts else np.zeros((0, 0))
        except KeyError:
            raise ProviderError(
                'No embedding registered for a requested text', retriable=False
            ) from None


_TOKEN = re.compile(r'\w+|[^\w\s]')


class HashingEmbeddingProvider(EmbeddingProvider):
    """Bag of token unigrams and bigrams hashed into ``dim`` buckets.

    Needs no model, and gives the same vectors on every platform.
    """

    def __init__(self, dim: int = 512) -> None:
        if dim <= 0:
            raise ConfigError('dim must be positive')
        self.dim = dim

    def _bucket(self, feature: str) -> tuple[int, float]:
        digest = hashlib.blake2b(feature.encode('utf-8'), digest_size=8).digest()
        value = int.from_bytes(digest, 'little')
        return value % self.dim, 1.0 if value >> 63 else -1.0

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float64)
        for row, text in enumerate(texts):
            tokens = _TOKEN.findall(text)
            features = tokens + [f'{a} {b}' for a, b in zip(tokens, tokens[1:])]
            for feature in features:
                index, sign = self._bucket(feature)
                out[row, index] += sign
        return out


# ==== factories ====


def chat_provider(config: ProviderConfig) -> ChatProvider:
    """Builds the chat provider a configuration describes."""
    if config.kind == 'replay':
        if config.replay_path is None:
            raise ConfigError('A replay provider needs a responses file')
        return ReplayChatProvider.from_file(config.replay_path)
    if not config.api_base or not config.model:
        raise ConfigError('An http provider needs STEPWISE_API_BASE and STEPWISE_MODEL')
    return HTTPChatProvider(
        config.api_base,
        config.model,
        config.api_key,
        timeout=config.timeout,
        max_retries=config.max_retries,
        max_inflight=config.max_inflight,
    )


def embedding_provider(config: ProviderConfig) -> EmbeddingProvider:
    """Builds the embedding provider a configuration describes.

    Without an endpoint and embedding model this falls back to hashing.
    """
    if config.kind == 'http' and config.api_base and config.embedding_model:
        return HTTPEmbeddingProvider(
            config.api_base,
            config.embedding_model,
            config.api_key,
            timeout=config.timeout,
            max_retries=config.max_retries,
            max_inflight=config.max_inflight,
        )
    log.info('no embedding endpoint configured, using hashed token embeddings')
    return HashingEmbeddingProvider()
