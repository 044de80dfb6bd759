"""Chat-completion transport for real specialists, head and reasoner."""

from __future__ import annotations

import base64
import logging
import mimetypes
import os
import time
from dataclasses import dataclass, replace
from pathlib import Path

import httpx

from ..errors import ConfigError, ParseError, PermanentError, TransientError
from ..query import QueryItem
from ..similarity import Answer, parse_answer
from .base import EvidenceRecord
from .prompts import render_role_prompt

log = logging.getLogger(__name__)

HEAD_MAX_TOKENS = 64
SPECIALIST_MAX_TOKENS = 1024


@dataclass(frozen=True)
class RemoteEndpoint:
    base_url: str
    model_name: str
    api_key_env_var: str | None = "OPENAI_API_KEY"
    temperature: float = 0.7
    top_p: float = 0.9
    max_tokens: int = SPECIALIST_MAX_TOKENS
    timeout: float = 60.0
    max_attempts: int = 3
    backoff: float = 1.0

    @classmethod
    def from_dict(cls, data: dict) -> RemoteEndpoint:
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown endpoint settings: {sorted(unknown)}")
        if "base_url" not in data or "model_name" not in data:
            raise ConfigError("endpoint needs base_url and model_name")
        ep = cls(**data)
        if ep.max_attempts < 1:
            raise ConfigError("max_attempts must be >= 1")
        return ep

    def for_head(self) -> RemoteEndpoint:
        return replace(self, max_tokens=HEAD_MAX_TOKENS)

    def headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.api_key_env_var:
            key = os.environ.get(self.api_key_env_var)
            if not key:
                raise ConfigError(f"environment variable {self.api_key_env_var} is not set")
            headers["Authorization"] = f"Bearer {key}"
        return headers


def image_part(image_ref: str) -> dict:
    """Content part for an image given as URL, data URI or local path."""
    if image_ref.startswith(("http://", "https://", "data:")):
        url = image_ref
    else:
        path = Path(image_ref)
        mime = mimetypes.guess_type(path.name)[0] or "application/octet-stream"
        url = f"data:{mime};base64," + base64.b64encode(path.read_bytes()).decode("ascii")
    return {"type": "image_url", "image_url": {"url": url}}


def build_messages(system_prompt: str, user_text: str, image_ref: str | None = None) -> list[dict]:
    if image_ref:
        content: str | list = [{"type": "text", "text": user_text}, image_part(image_ref)]
    else:
        content = user_text
    return [
        {"role": "system", "content": system_prompt},
        {"role": "user", "content": content},
    ]


def _content(body: dict) -> str:
    try:
        content = body["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError):
        raise PermanentError("response has no choices[0].message.content") from None
    if isinstance(content, list):
        return "".join(p.get("text", "") for p in content if isinstance(p, dict))
    return content or ""


def chat_completion(
    endpoint: RemoteEndpoint,
    messages: list[dict],
    client: httpx.Client | None = None,
    sleep=time.sleep,
) -> str:
    """POST a chat-completion request, retrying transient failures.

    Network errors, timeouts, 429 and 5xx are retried with exponential
    backoff; other 4xx responses fail immediately.
    """
    payload = {
        "model": endpoint.model_name,
        "messages": messages,
        "temperature": endpoint.temperature,
        "top_p": endpoint.top_p,
        "max_tokens": endpoint.max_tokens,
    }
    url = endpoint.base_url.rstrip("/") + "/chat/completions"
    headers = endpoint.headers()
    own = client is None
    client = client or httpx.Client(timeout=endpoint.timeout)
    last: Exception | None = None
    try:
        for attempt in range(endpoint.max_attempts):
            if attempt:
                sleep(endpoint.backoff * 2 ** (attempt - 1))
            try:
                resp = client.post(url, json=payload, headers=headers, timeout=endpoint.timeout)
            except httpx.TransportError as exc:
                last = exc
                log.warning("attempt %d to %s failed: %s", attempt + 1, url, exc)
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last = TransientError(f"HTTP {resp.status_code} from {url}")
                log.warning("attempt %d to %s got HTTP %d", attempt + 1, url, resp.status_code)
                continue
            if resp.status_code >= 400:
                raise PermanentError(f"HTTP {resp.status_code} from {url}: {resp.text[:200]}", resp.status_code)
            try:
                body = resp.json()
            except ValueError:
                raise PermanentError(f"non-JSON response from {url}") from None
            return _content(body)
    finally:
        if own:
            client.close()
    raise TransientError(f"{url} failed after {endpoint.max_attempts} attempts: {last}")


def execute_remote(
    endpoint: RemoteEndpoint,
    prompt: str,
    query: QueryItem,
    agent_id: str,
    role: str,
    client: httpx.Client | None = None,
    sleep=time.sleep,
) -> EvidenceRecord:
    """Run one specialist call; unparseable replies become sentinel answers.

    Transport errors propagate so the caller decides how to degrade.
    """
    start = time.perf_counter()
    messages = build_messages(prompt, query.prompt_text(), query.image_ref)
    text = chat_completion(endpoint, messages, client, sleep)
    latency = time.perf_counter() - start
    try:
        answer = parse_answer(text, query.answer_kind, query.options)
        error = None
    except ParseError as exc:
        answer = Answer.invalid(query.answer_kind)
        error = f"parse: {exc}"
    return EvidenceRecord(agent_id, role, answer, text, latency, error)


@dataclass
class RemoteAgent:
    agent_id: str
    endpoint: RemoteEndpoint
    client: httpx.Client | None = None
    display_name: str = ""

    def run(self, role: str, query: QueryItem, category: str) -> EvidenceRecord:
        prompt = render_role_prompt(role, query)
        return execute_remote(self.endpoint, prompt, query, self.agent_id, role, self.client)

