"""Prompt assembly, vision-chat API calls, response parsing, and a deterministic mock.

The wire protocol is OpenAI-compatible chat completions (messages with mixed
text / image-URL content parts). The mock backend is a pure seeded function of
the request content hash, so the whole pipeline runs offline and reruns are
byte-identical.
"""

from __future__ import annotations

import hashlib
import importlib.resources
import json
import os
import random
import re
import threading
import time
from dataclasses import dataclass, field

import httpx

from .corpus import ImageTextPair
from .errors import (
    AuthError,
    MalformedResponse,
    RateLimited,
    TemplateError,
    Timeout,
    UnparseableRating,
    UnparseableVerdict,
)

DEFAULT_CRITERIA = [
    "missing information",
    "recognition errors",
    "lack of medical precision",
    "insufficient depth",
    "valueless questions",
]


@dataclass
class ChatRequest:
    system: str
    messages: list  # [{"role": str, "parts": [{"type": "text"|"image", ...}]}]
    temperature: float = 0.7
    max_tokens: int = 2048
    model_id: str = "gpt-4-vision-preview"

    def text(self) -> str:
        chunks = [self.system] if self.system else []
        for msg in self.messages:
            for part in msg["parts"]:
                if part["type"] == "text":
                    chunks.append(part["text"])
        return "\n".join(chunks)

    def content_hash(self) -> str:
        payload = json.dumps(
            {"system": self.system, "messages": self.messages, "model": self.model_id},
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass
class GenerationOutput:
    raw: str
    parsed: list[tuple[str, str]]
    usable: bool
    reason: str = ""


@dataclass
class RetryPolicy:
    max_attempts: int = 5
    backoff_base_ms: int = 500


@dataclass
class BackendConfig:
    base_url: str
    api_key_env: str = "MEDCURATE_API_KEY"
    max_inflight: int = 4
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    timeout_ms: int = 60000
    model_id: str = "gpt-4-vision-preview"


def load_template(name: str) -> str:
    """Load a bundled default template (generation, rating, judge, chat_score)."""
    ref = importlib.resources.files("medcurate") / "templates" / f"{name}.txt"
    return ref.read_text(encoding="utf-8")


def _require(template: str, placeholders: list[str]):
    for ph in placeholders:
        if ph not in template:
            raise TemplateError(f"template missing placeholder {ph}")


def render_demo(demo: dict) -> str:
    return f"Context: {demo['context']}\nResponse: {demo['response']}"


def build_generation_prompt(target: ImageTextPair, demos: list[dict],
                            template: str, model_id: str = "gpt-4-vision-preview",
                            temperature: float = 0.7) -> ChatRequest:
    """Render the few-shot generation request: demonstrations in given order,
    then the query with its image attached. Pure string substitution; the
    renderer never edits demonstration content."""
    _require(template, ["{{demos}}", "{{caption}}", "{{mentions}}"])
    body = (
        template.replace("{{demos}}", "\n\n".join(render_demo(d) for d in demos))
        .replace("{{caption}}", target.caption)
        .replace("{{mentions}}", "; ".join(target.inline_mentions))
    )
    return ChatRequest(
        system="",
        messages=[
            {
                "role": "user",
                "parts": [
                    {"type": "text", "text": body},
                    {"type": "image", "ref": target.image_ref},
                ],
            }
        ],
        temperature=temperature,
        model_id=model_id,
    )


def build_rating_prompt(sample: tuple[str, str, str], criteria: list[str],
                        template: str, model_id: str = "gpt-4-vision-preview") -> ChatRequest:
    """Render the judge request asking for an integer score with a SCORE tag."""
    if not criteria:
        raise TemplateError("criteria list is empty")
    _require(template, ["{{criteria}}", "{{question}}", "{{answer}}"])
    image_ref, question, answer = sample
    body = (
        template.replace("{{criteria}}", "\n".join(f"- {c}" for c in criteria))
        .replace("{{question}}", question)
        .replace("{{answer}}", answer)
    )
    parts = [{"type": "text", "text": body}]
    if image_ref:
        parts.append({"type": "image", "ref": image_ref})
    return ChatRequest(system="", messages=[{"role": "user", "parts": parts}],
                       temperature=0.0, model_id=model_id)


def build_judge_prompt(question: str, reference: str, answer_a: str, answer_b: str,
                       template: str, image_ref: str = "",
                       model_id: str = "gpt-4-vision-preview") -> ChatRequest:
    _require(template, ["{{question}}", "{{reference}}", "{{answer_a}}", "{{answer_b}}"])
    body = (
        template.replace("{{question}}", question)
        .replace("{{reference}}", reference)
        .replace("{{answer_a}}", answer_a)
        .replace("{{answer_b}}", answer_b)
    )
    parts = [{"type": "text", "text": body}]
    if image_ref:
        parts.append({"type": "image", "ref": image_ref})
    return ChatRequest(system="", messages=[{"role": "user", "parts": parts}],
                       temperature=0.0, model_id=model_id)


def build_chat_score_prompt(question: str, reference: str, answer: str,
                            template: str, image_ref: str = "",
                            model_id: str = "gpt-4-vision-preview") -> ChatRequest:
    _require(template, ["{{question}}", "{{reference}}", "{{answer}}"])
    body = (
        template.replace("{{question}}", question)
        .replace("{{reference}}", reference)
        .replace("{{answer}}", answer)
    )
    parts = [{"type": "text", "text": body}]
    if image_ref:
        parts.append({"type": "image", "ref": image_ref})
    return ChatRequest(system="", messages=[{"role": "user", "parts": parts}],
                       temperature=0.0, model_id=model_id)


# -- backends ------------------------------------------------------------------

_QUESTION_STEMS = [
    "What does the image reveal about the {topic}?",
    "Which abnormalities are visible in the {topic}?",
    "How would you characterize the {topic} seen here?",
    "What is the clinical significance of the {topic}?",
    "Are there features suggesting progression in the {topic}?",
    "What follow-up would you recommend given the {topic}?",
]

_TOPICS = ["lung fields", "soft tissue", "lesion margins", "contrast uptake",
           "cellular morphology", "vascular structures"]


class MockBackend:
    """Deterministic offline stand-in for the remote model.

    Output is a pure function of (request content hash, seed). The kind of
    reply is inferred from the prompt text: a "from 0 to 10" instruction gets
    a rating, a "WINNER:" instruction gets a verdict, a "from 1 to 10"
    instruction gets a 1..10 score, anything else gets generation JSON with
    4-5 rounds wrapped in a little prose.
    """

    def __init__(self, seed: int = 0):
        self.seed = seed

    def _rng(self, request: ChatRequest) -> random.Random:
        digest = hashlib.sha256(
            f"{request.content_hash()}:{self.seed}".encode("utf-8")
        ).digest()
        return random.Random(int.from_bytes(digest[:8], "big"))

    def call(self, request: ChatRequest) -> str:
        rng = self._rng(request)
        text = request.text()
        if 'form "WINNER:' in text or "WINNER: A" in text:
            return f"WINNER: {rng.choice(['A', 'B', 'Tie'])}"
        if "from 0 to 10" in text:
            return f"SCORE: {rng.randint(0, 10)}"
        if "from 1 to 10" in text:
            return f"SCORE: {rng.randint(1, 10)}"
        rounds = []
        for _ in range(rng.choice([4, 5])):
            topic = rng.choice(_TOPICS)
            rounds.append(
                {
                    "question": rng.choice(_QUESTION_STEMS).format(topic=topic),
                    "answer": f"The {topic} appear {rng.choice(['normal', 'abnormal', 'subtly altered'])}; "
                              f"correlation with the clinical context is advised.",
                }
            )
        return "Here is the requested conversation.\n" + json.dumps(rounds, indent=1)


class HttpBackend:
    """OpenAI-compatible chat-completions client with retries and bounded concurrency."""

    def __init__(self, config: BackendConfig, transport: httpx.BaseTransport | None = None):
        self.config = config
        self._semaphore = threading.BoundedSemaphore(config.max_inflight)
        self._client = httpx.Client(
            base_url=config.base_url,
            timeout=config.timeout_ms / 1000.0,
            transport=transport,
        )

    def _payload(self, request: ChatRequest) -> dict:
        messages = []
        if request.system:
            messages.append({"role": "system", "content": request.system})
        for msg in request.messages:
            content = []
            for part in msg["parts"]:
                if part["type"] == "text":
                    content.append({"type": "text", "text": part["text"]})
                else:
                    content.append({"type": "image_url", "image_url": {"url": part["ref"]}})
            messages.append({"role": msg["role"], "content": content})
        return {
            "model": request.model_id,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }

    def call(self, request: ChatRequest) -> str:
        api_key = os.environ.get(self.config.api_key_env, "")
        headers = {"Authorization": f"Bearer {api_key}"}
        retry = self.config.retry
        last_exc = None
        with self._semaphore:
            for attempt in range(retry.max_attempts):
                if attempt > 0:
                    backoff = retry.backoff_base_ms / 1000.0 * (2 ** (attempt - 1))
                    time.sleep(backoff * (0.5 + random.random() / 2))
                try:
                    resp = self._client.post(
                        "/chat/completions", json=self._payload(request), headers=headers
                    )
                except httpx.TimeoutException as exc:
                    last_exc = Timeout(str(exc))
                    continue
                if resp.status_code in (401, 403):
                    raise AuthError(f"HTTP {resp.status_code}")
                if resp.status_code == 429 or resp.status_code >= 500:
                    last_exc = RateLimited(f"HTTP {resp.status_code}")
                    continue
                try:
                    body = resp.json()
                    return body["choices"][0]["message"]["content"]
                except (json.JSONDecodeError, KeyError, IndexError, TypeError) as exc:
                    raise MalformedResponse(str(exc)) from exc
        raise last_exc or RateLimited("retries exhausted")


def call(request: ChatRequest, backend) -> str:
    """Dispatch a request to a MockBackend, HttpBackend, or BackendConfig."""
    if isinstance(backend, BackendConfig):
        backend = HttpBackend(backend)
    return backend.call(request)


class Dispatcher:
    """Bounded-concurrency wrapper shared by pipeline stages."""

    def __init__(self, backend, max_inflight: int = 4):
        self.backend = backend
        self._semaphore = threading.BoundedSemaphore(max_inflight)

    def call(self, request: ChatRequest) -> str:
        with self._semaphore:
            return self.backend.call(request)


# -- parsing --------------------------------------------------------------------


def parse_generation(raw: str) -> GenerationOutput:
    """Extract QA rounds from the first valid JSON list of {question, answer}
    objects in the reply; tolerant of surrounding prose. Failures are encoded
    as usable=False with a reason, never raised."""
    decoder = json.JSONDecoder()
    idx = raw.find("[")
    while idx != -1:
        try:
            value, _ = decoder.raw_decode(raw[idx:])
        except json.JSONDecodeError:
            idx = raw.find("[", idx + 1)
            continue
        if (
            isinstance(value, list)
            and value
            and all(
                isinstance(r, dict)
                and isinstance(r.get("question"), str)
                and isinstance(r.get("answer"), str)
                for r in value
            )
        ):
            parsed = [(r["question"], r["answer"]) for r in value]
            return GenerationOutput(raw=raw, parsed=parsed, usable=True)
        idx = raw.find("[", idx + 1)
    return GenerationOutput(raw=raw, parsed=[], usable=False, reason="no valid JSON rounds block")


_SCORE_RE = re.compile(r"SCORE\s*[:=]\s*(-?\d+)", re.IGNORECASE)
_WINNER_RE = re.compile(r"WINNER\s*[:=]\s*(A|B|Tie)", re.IGNORECASE)


def parse_rating(raw: str, lo: int = 0, hi: int = 10) -> int:
    """Extract the tagged integer score; out-of-range values are an error, not clamped."""
    m = _SCORE_RE.search(raw)
    if not m:
        raise UnparseableRating(raw[:200])
    value = int(m.group(1))
    if not lo <= value <= hi:
        raise UnparseableRating(f"score {value} outside {lo}..{hi}: {raw[:200]}")
    return value


def parse_verdict(raw: str) -> str:
    m = _WINNER_RE.search(raw)
    if not m:
        raise UnparseableVerdict(raw[:200])
    token = m.group(1).lower()
    return {"a": "A", "b": "B", "tie": "Tie"}[token]
