"""Prompt construction, pluggable chat backends, and answer parsing.

Every request/response pair is appended to a line-delimited transcript so
a run can be audited and replayed byte-for-byte without the live backend.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass

from .corpus import ArticleView
from .errors import BackendUnavailableError
from .guide import Answer, AnswerValue, OutcomeSet, Phase, Question

log = logging.getLogger(__name__)

PHASE1_SYSTEM_PROMPT = (
    "Act as an experienced medical researcher performing Title and Abstract "
    "screening for Umbrella Review, reviewing articles to decide if they should "
    "be included or excluded from your study. Each time you will receive the "
    "title and abstract for a paper along with a question that you have to "
    "answer based on the authors' work. Later on, your answers will help decide "
    "whether an article should be included or excluded so be precise while "
    "answering. If you are not sure, answer with 'uncertain'."
)

# Full-text variant: same persona, context comes from retrieved passages.
PHASE2_SYSTEM_PROMPT = (
    "Act as an experienced medical researcher performing full-text screening "
    "for Umbrella Review, reviewing articles to decide if they should be "
    "included or excluded from your study. Each time you will receive excerpts "
    "retrieved from a paper's full text along with a question that you have to "
    "answer based on the authors' work. Later on, your answers will help decide "
    "whether an article should be included or excluded so be precise while "
    "answering. If you are not sure, answer with 'uncertain'."
)


@dataclass(frozen=True)
class PromptBundle:
    system_prompt: str
    user_prompt: str
    question_id: str
    article_id: str
    phase: Phase

    @property
    def prompt_hash(self) -> str:
        h = hashlib.sha256()
        h.update(self.system_prompt.encode("utf-8"))
        h.update(b"\x00")
        h.update(self.user_prompt.encode("utf-8"))
        return h.hexdigest()[:16]


@dataclass
class BackendProfile:
    name: str = "default"
    max_concurrent: int = 8
    max_retries: int = 3
    backoff_base: float = 1.0  # seconds, doubled per retry
    timeout: float = 60.0
    temperature: float = 0.0

    def __post_init__(self):
        if self.max_concurrent < 1:
            raise ValueError("max_concurrent must be >= 1")


@dataclass
class RawResponse:
    text: str
    latency: float
    attempt: int


class TransientBackendError(Exception):
    """Retryable failure: timeout, rate limit, 5xx-class."""


class PermanentBackendError(Exception):
    """Non-retryable failure: auth, bad request."""


def build_prompt(
    question: Question,
    article: ArticleView,
    phase: Phase,
    context_chunks: list[tuple[int, str]] | None = None,
) -> PromptBundle:
    """Assemble the fixed-layout user prompt; byte-stable for equal inputs.

    Phase 1 shows TITLE and ABSTRACT (or a "(none)" placeholder); phase 2
    shows TITLE and the retrieved CONTEXT chunks instead of the whole text.
    """
    lines = [f"TITLE: {article.title}"]
    if phase is Phase.TITLE_ABSTRACT:
        lines.append(f"ABSTRACT: {article.abstract if article.abstract else '(none)'}")
        system = PHASE1_SYSTEM_PROMPT
    else:
        for idx, text in context_chunks or []:
            lines.append(f"--- context chunk {idx} ---")
            lines.append(text)
        system = PHASE2_SYSTEM_PROMPT
    lines.append("")
    lines.append(f"QUESTION: {question.text}")
    return PromptBundle(
        system_prompt=system,
        user_prompt="\n".join(lines),
        question_id=question.id,
        article_id=article.id,
        phase=phase,
    )


class ChatGateway:
    """Calls a backend with retry/backoff and a shared concurrency bound."""

    def __init__(self, backend, profile: BackendProfile | None = None,
                 transcript_path=None, sleep=time.sleep):
        self.backend = backend
        self.profile = profile or BackendProfile()
        self.transcript_path = transcript_path
        self._sleep = sleep
        self._sem = threading.Semaphore(self.profile.max_concurrent)
        self._transcript_lock = threading.Lock()

    def ask(self, bundle: PromptBundle) -> RawResponse:
        last_cause = None
        start = time.perf_counter()
        for attempt in range(1, self.profile.max_retries + 2):
            with self._sem:
                try:
                    if hasattr(self.backend, "complete_bundle"):
                        text = self.backend.complete_bundle(bundle)
                    else:
                        text = self.backend.complete(bundle.system_prompt, bundle.user_prompt)
                    response = RawResponse(
                        text=text,
                        latency=time.perf_counter() - start,
                        attempt=attempt,
                    )
                    self._record(bundle, response)
                    return response
                except TransientBackendError as exc:
                    last_cause = exc
                    log.warning("transient backend failure (attempt %d): %s", attempt, exc)
                except PermanentBackendError as exc:
                    raise BackendUnavailableError(f"permanent backend failure: {exc}", cause=exc)
            if attempt <= self.profile.max_retries:
                self._sleep(self.profile.backoff_base * (2 ** (attempt - 1)))
        raise BackendUnavailableError(
            f"backend {self.backend.name} failed after {self.profile.max_retries + 1} attempts",
            cause=last_cause,
        )

    def _record(self, bundle: PromptBundle, response: RawResponse) -> None:
        if self.transcript_path is None:
            return
        row = {
            "article_id": bundle.article_id,
            "question_id": bundle.question_id,
            "phase": bundle.phase.value,
            "prompt_hash": bundle.prompt_hash,
            "response_text": response.text,
            "latency_ms": round(response.latency * 1000, 3),
            "attempt": response.attempt,
        }
        with self._transcript_lock:
            with open(self.transcript_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")


_SENTINELS = {
    "yes": AnswerValue.YES,
    "yeah": AnswerValue.YES,
    "no": AnswerValue.NO,
    "nope": AnswerValue.NO,
    "unsure": AnswerValue.UNSURE,
    "uncertain": AnswerValue.UNSURE,
}


def parse_answer(raw: str, question_id: str = "") -> Answer:
    """Map free text onto Yes/No/Unsure; the first sentinel token decides.

    Total: text without any sentinel degrades to Unsure with the unparsed
    flag set (and logged), never an error.
    """
    for token in re.findall(r"[a-z]+", raw.lower()):
        if token in _SENTINELS:
            return Answer(_SENTINELS[token], raw=raw, question_id=question_id)
    log.warning("unparsed answer for %s: %r", question_id or "<question>", raw)
    return Answer(AnswerValue.UNSURE, raw=raw, question_id=question_id, unparsed=True)


def parse_outcomes(raw: str) -> OutcomeSet:
    """Extract outcome labels by case-insensitive substring match."""
    lowered = raw.lower()
    labels = frozenset(
        label for label in ("Falls", "Fractures", "Mortality") if label.lower() in lowered
    )
    if labels:
        return OutcomeSet(labels=labels)
    return OutcomeSet(unsure=True)


class HttpChatBackend:
    """Chat-completions-style HTTP backend; credential via environment variable."""

    def __init__(self, base_url: str, model: str, api_key_env: str = "SRSCREEN_API_KEY",
                 timeout: float = 60.0, temperature: float = 0.0):
        import httpx

        self.name = f"http:{model}"
        self.model = model
        self.temperature = temperature
        key = os.environ.get(api_key_env, "")
        headers = {"Authorization": f"Bearer {key}"} if key else {}
        self._client = httpx.Client(base_url=base_url, timeout=timeout, headers=headers)

    def complete(self, system_prompt: str, user_prompt: str) -> str:
        import httpx

        payload = {
            "model": self.model,
            "temperature": self.temperature,
            "messages": [
                {"role": "system", "content": system_prompt},
                {"role": "user", "content": user_prompt},
            ],
        }
        try:
            resp = self._client.post("/chat/completions", json=payload)
        except httpx.TimeoutException as exc:
            raise TransientBackendError(f"timeout: {exc}")
        except httpx.HTTPError as exc:
            raise TransientBackendError(f"http error: {exc}")
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransientBackendError(f"status {resp.status_code}")
        if resp.status_code >= 400:
            raise PermanentBackendError(f"status {resp.status_code}: {resp.text[:200]}")
        return resp.json()["choices"][0]["message"]["content"]


class KeywordRuleBackend:
    """Rule-table mock: first (question_pattern, content_pattern) match wins.

    Rules are (question regex, content regex, answer text) triples applied
    against the QUESTION line and the rest of the user prompt respectively.
    """

    name = "keyword-mock"

    def __init__(self, rules: list[tuple[str, str, str]], default: str = "unsure"):
        self.rules = [
            (re.compile(q, re.IGNORECASE), re.compile(c, re.IGNORECASE), answer)
            for q, c, answer in rules
        ]
        self.default = default

    def complete(self, system_prompt: str, user_prompt: str) -> str:
        question = ""
        content_lines = []
        for line in user_prompt.splitlines():
            if line.startswith("QUESTION: "):
                question = line[len("QUESTION: "):]
            else:
                content_lines.append(line)
        content = "\n".join(content_lines)
        for q_re, c_re, answer in self.rules:
            if q_re.search(question) and c_re.search(content):
                return answer
        return self.default


class OracleBackend:
    """Answers from per-(article, question) fixture labels; end-to-end metric tests."""

    name = "oracle-mock"

    def __init__(self, answers: dict[tuple[str, str], str], default: str = "unsure"):
        self.answers = answers  # keyed by (article_id, question_id)
        self.default = default

    def complete_bundle(self, bundle: PromptBundle) -> str:
        return self.answers.get((bundle.article_id, bundle.question_id), self.default)


class TranscriptReplayBackend:
    """Replays a recorded transcript, keyed by prompt hash."""

    name = "transcript-replay"

    def __init__(self, transcript_path):
        self.responses: dict[str, str] = {}
        with open(transcript_path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    row = json.loads(line)
                    self.responses[row["prompt_hash"]] = row["response_text"]

    def complete(self, system_prompt: str, user_prompt: str) -> str:
        bundle_hash = PromptBundle(
            system_prompt=system_prompt, user_prompt=user_prompt,
            question_id="", article_id="", phase=Phase.TITLE_ABSTRACT,
        ).prompt_hash
        try:
            return self.responses[bundle_hash]
        except KeyError:
            raise PermanentBackendError(f"prompt hash {bundle_hash} not in transcript")
