"""Prompt templates and a chat-completion gateway with a hermetic mock mode.

The four templates cover session-time structuring, description summarising,
event-type classification and post relevance.  ``Gateway.complete`` either
POSTs to an OpenAI-style ``/v1/chat/completions`` endpoint or answers from
:mod:`eventflow.mock_llm`, which is a pure function of the prompt text.
"""

from __future__ import annotations

import logging
import os
import re
import string
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Mapping

import httpx

from .errors import GatewayError, MissingBinding, UnparseableAnswer

log = logging.getLogger(__name__)

API_KEY_ENV = "EVENTFLOW_API_KEY"

TEMPLATES: dict[str, str] = {
    "P1_time": (
        "The text below gives the hosting time of an event. Event ID: {event_id}. "
        "Event time: {raw_time}.\n\n"
        "Extract the exact start and end datetime of the event. When the event has "
        "several sessions, give the start and end datetime of every session. When a "
        "session has no clock time, use 00:00:00 as its start and 23:59:59 as its end "
        "on that day.\n\n"
        "Answer with a table of four columns separated by '|':\n"
        "- Id: the event ID.\n"
        "- Sub id: a unique session number starting from 1.\n"
        "- Start time: session start as YYYY-MM-DD hh:mm:ss.\n"
        "- End time: session end as YYYY-MM-DD hh:mm:ss."
    ),
    "P2_summary": (
        "Summarise the event using this description taken from its web page: "
        "{raw_description}\n\n"
        "Requirements:\n"
        "- Leave out time, location, registration, ticket and payment details; "
        "describe only the event content.\n"
        "- Use at most {token_budget} tokens.\n"
        "- Write the summary in {language}.\n"
        "- Reply with the summary only, no explanations."
    ),
    "P3_classify": (
        "An event takes place in {study_area} under the title {event_title}. "
        "Summary: {summary}\n\n"
        "Assign the event to one of these categories: {event_types}.\n"
        "Reply with the category name only."
    ),
    "P4_relevance": (
        "Compare the event and the social media post below and decide whether post "
        "{post_id} is related to the event. Reply \"Yes\" if it is related and \"No\" "
        "if it is not.\n\n"
        "Event:\n"
        "- Title: {event_title}\n"
        "- Type: {event_type}\n"
        "- Description: {summary}\n\n"
        "Post:\n"
        "- Title: {post_title}\n"
        "- Content: {post_content}\n"
        "- Geo-tags: {post_geotags}\n"
        "- Hashtags: {post_hashtags}\n\n"
        "The post counts as related only if it refers to an event held in "
        "{study_area} and clearly connects to the event described above."
    ),
}


def placeholders(template_id: str) -> list[str]:
    """Placeholder names of a template in order of first appearance."""
    seen: list[str] = []
    for _, name, _, _ in string.Formatter().parse(TEMPLATES[template_id]):
        if name and name not in seen:
            seen.append(name)
    return seen


def render(template_id: str, bindings: Mapping[str, object]) -> str:
    """Fill a template; every placeholder must be bound."""
    if template_id not in TEMPLATES:
        raise KeyError(f"unknown template {template_id!r}")
    missing = [name for name in placeholders(template_id) if name not in bindings]
    if missing:
        raise MissingBinding(f"{template_id}: unbound placeholder(s) {', '.join(missing)}")
    return TEMPLATES[template_id].format_map({k: str(v) for k, v in bindings.items()})


def _template_regex(template_id: str) -> re.Pattern:
    parts = []
    seen: set[str] = set()
    for literal, name, _, _ in string.Formatter().parse(TEMPLATES[template_id]):
        parts.append(re.escape(literal))
        if name is None:
            continue
        parts.append(f"(?P={name})" if name in seen else f"(?P<{name}>.*?)")
        seen.add(name)
    return re.compile("^" + "".join(parts) + "$", re.DOTALL)


_TEMPLATE_RES = {tid: _template_regex(tid) for tid in TEMPLATES}


def parse_prompt(prompt: str) -> tuple[str, dict[str, str]]:
    """Recover ``(template_id, bindings)`` from a rendered prompt."""
    for tid, rx in _TEMPLATE_RES.items():
        m = rx.match(prompt)
        if m:
            return tid, m.groupdict()
    raise UnparseableAnswer("prompt does not match any known template", raw_output=prompt)


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    base_backoff: float = 1.0

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        if self.base_backoff < 0:
            raise ValueError("base_backoff must be >= 0")

    def delays(self) -> list[float]:
        """Sleep before attempt 2, 3, ...; doubles each time."""
        return [self.base_backoff * 2 ** k for k in range(self.max_attempts - 1)]


@dataclass(frozen=True)
class MockRuleSet:
    keyword_map: Mapping[str, tuple[str, ...]] = field(default_factory=lambda: dict(DEFAULT_KEYWORDS))
    relevance_threshold: float = 0.15
    echo_budget: int = 120

    def __post_init__(self):
        if not 0.0 <= self.relevance_threshold <= 1.0:
            raise ValueError("relevance_threshold must lie in [0, 1]")
        if self.echo_budget < 1:
            raise ValueError("echo_budget must be positive")


DEFAULT_KEYWORDS: dict[str, tuple[str, ...]] = {
    "concert": ("concert", "concerts", "演唱会", "演唱會", "音乐会", "音樂會", "live", "tour",
                "singer", "band", "gig", "encore", "setlist"),
    "exhibition": ("exhibition", "exhibit", "展览", "展覽", "展", "gallery", "museum",
                   "artworks", "installation", "art"),
    "sports": ("marathon", "race", "match", "tournament", "sevens", "rugby", "football",
               "tennis", "golf", "championship", "cup", "比赛", "比賽", "马拉松", "馬拉松"),
    "fireworks": ("fireworks", "firework", "pyrotechnic", "烟花", "煙花", "烟火", "煙火"),
    "fair": ("fair", "bazaar", "market", "flea", "市集", "carnival", "expo"),
    "performance": ("performance", "theatre", "theater", "drama", "ballet", "opera", "musical",
                    "dance", "acrobatics", "话剧", "話劇"),
    "religious": ("temple", "buddha", "church", "religious", "blessing", "procession", "mass",
                  "庙会", "廟會", "佛诞", "佛誕"),
}


@dataclass(frozen=True)
class GatewayConfig:
    endpoint_url: str = "http://localhost:8000/v1/chat/completions"
    model_name: str = "gpt-4"
    temperature: float = 0.0
    max_in_flight: int = 4
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    mode: str = "mock"
    timeout: float = 60.0
    mock_rules: MockRuleSet = field(default_factory=MockRuleSet)

    def __post_init__(self):
        if self.mode not in ("remote", "mock"):
            raise ValueError(f"mode must be 'remote' or 'mock', got {self.mode!r}")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")


class Gateway:
    """Bounded-concurrency chat-completion client.

    ``transport`` and ``sleep`` are injectable so tests can exercise the
    retry loop without a network or wall-clock delays.
    """

    def __init__(self, config: GatewayConfig | None = None, *, transport: httpx.BaseTransport | None = None,
                 sleep: Callable[[float], None] = time.sleep, api_key: str | None = None):
        self.config = config or GatewayConfig()
        self._sleep = sleep
        self._slots = threading.BoundedSemaphore(self.config.max_in_flight)
        self._api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        self._client = None
        if self.config.mode == "remote":
            self._client = httpx.Client(transport=transport, timeout=self.config.timeout)
        self.requests_sent = 0

    def close(self):
        if self._client is not None:
            self._client.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def complete(self, prompt: str) -> str:
        if self.config.mode == "mock":
            from .mock_llm import respond
            return respond(prompt, self.config.mock_rules)
        with self._slots:
            return self._complete_remote(prompt)

    def _complete_remote(self, prompt: str) -> str:
        cfg = self.config
        body = {
            "model": cfg.model_name,
            "temperature": cfg.temperature,
            "messages": [{"role": "user", "content": prompt}],
        }
        headers = {"Content-Type": "application/json"}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        delays = cfg.retry.delays()
        last_exc: Exception | None = None
        status = None
        for attempt in range(cfg.retry.max_attempts):
            if attempt:
                self._sleep(delays[attempt - 1])
            self.requests_sent += 1
            log.debug("POST %s attempt=%d body=%s auth=%s", cfg.endpoint_url, attempt + 1, body,
                      "Bearer ***" if self._api_key else "none")
            try:
                resp = self._client.post(cfg.endpoint_url, json=body, headers=headers)
            except httpx.HTTPError as exc:
                last_exc, status = exc, None
                log.debug("transport error: %s", exc)
                continue
            log.debug("response status=%d body=%s", resp.status_code, resp.text[:2000])
            if resp.status_code >= 400:
                last_exc, status = None, resp.status_code
                if resp.status_code < 500 and resp.status_code != 429:
                    break
                continue
            try:
                return resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise GatewayError("malformed completion response", cause=exc,
                                   status=resp.status_code, raw_output=resp.text) from exc
        raise GatewayError(
            f"request failed after {attempt + 1} attempt(s)"
            + (f" (HTTP {status})" if status else f": {last_exc}" if last_exc else ""),
            cause=last_exc, status=status,
        )


_YES_NO_RE = re.compile(r"^\s*[\"'“”]?(yes|no)[\"'“”]?[.!]?\s*$", re.IGNORECASE)


def parse_yes_no(answer: str) -> bool:
    """Strict Yes/No parse; quotes and one trailing period are tolerated."""
    m = _YES_NO_RE.match(answer)
    if not m:
        raise UnparseableAnswer(f"expected Yes or No, got {answer!r}", raw_output=answer)
    return m.group(1).lower() == "yes"


def relevance_check(event, post, gateway: Gateway, study_area: str = "Hong Kong") -> bool:
    """Ask whether ``post`` is about ``event``."""
    if not event.summary:
        raise ValueError(f"event {event.event_id} has no summary")
    if not (post.title or post.content):
        raise ValueError(f"post {post.post_id} has neither title nor content")
    prompt = render("P4_relevance", {
        "post_id": post.post_id,
        "event_title": event.title,
        "event_type": event.event_type,
        "summary": event.summary,
        "post_title": post.title,
        "post_content": post.content,
        "post_geotags": ", ".join(post.geotags),
        "post_hashtags": " ".join(post.hashtags),
        "study_area": study_area,
    })
    return parse_yes_no(gateway.complete(prompt))
