"""Summary providers: a deterministic keyword-driven mock and an HTTP client
with retries and an on-disk response cache."""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Protocol

import numpy as np

from .. import lexicon
from ..errors import ConfigError, ProviderEmptyResponseError, ProviderParseError
from ..objectives import screen_label, severity_bins
from ..records import StageSummary
from ..transport import Transport, httpx_transport, post_json_with_retry
from .prompts import SummaryRequest, build_prompt, fingerprint


class SummaryProvider(Protocol):
    name: str
    kind: str

    def summarize(self, req: SummaryRequest) -> StageSummary: ...


# -- mock -----------------------------------------------------------------------

_OPENERS = ("Overall impression", "General impression", "Summary")


def _emotion_line(mood: int, positive: int) -> str:
    if mood >= 2:
        state = "persistently low mood"
    elif mood == 1:
        state = "some low mood"
    else:
        state = "no explicit low mood"
    if positive:
        return f"{state}, with {positive} positive remark{'s' if positive != 1 else ''}"
    return f"{state}, with no positive remarks"


def mock_summarize(req: SummaryRequest, seed: int = 0) -> StageSummary:
    """Fill a stage-specific template from lexicon keyword counts.

    Stage 3 emits one ``PHQ domain`` line per instrument domain with a 0-3
    rating equal to the keyword count capped at 3.
    """
    prompt = build_prompt(req)
    fp = fingerprint(prompt)
    rng = np.random.default_rng([seed, int(fp[:15], 16)])
    domains = lexicon.domains_for(req.instrument)
    counts = lexicon.domain_counts(req.transcript, domains)
    positive = lexicon.wellbeing_count(req.transcript)
    noted = [lexicon.DOMAIN_LABELS[d] for d in domains if counts[d]]

    lines = [
        f"{_OPENERS[int(rng.integers(len(_OPENERS)))]} (stage {req.stage}).",
        f"Emotional state: {_emotion_line(counts['mood'], positive)}.",
        f"Symptoms noted: {', '.join(noted) if noted else 'none reported'}.",
    ]
    if req.stage >= 2:
        causes = lexicon.cause_hits(req.transcript)
        lines.append(f"Potential causes: {', '.join(causes) if causes else 'none identified'}.")
        lines.append(f"Well-being indicators: {positive} mention{'s' if positive != 1 else ''}.")
    if req.stage == 3:
        lines.append("Clinical note:")
        ratings = {d: min(3, counts[d]) for d in domains}
        for d in domains:
            lines.append(f"PHQ domain {lexicon.DOMAIN_LABELS[d]}: rating {ratings[d]} of 3")
        lines.append(f"Domain total: {sum(ratings.values())} of {3 * len(domains)}")
    return StageSummary(req.stage, "\n".join(lines), "mock", fp)


class MockSummaryProvider:
    kind = "mock"

    def __init__(self, seed: int = 0, name: str = "mock"):
        self.seed = seed
        self.name = name

    def summarize(self, req: SummaryRequest) -> StageSummary:
        return mock_summarize(req, self.seed)


# -- http -----------------------------------------------------------------------

class SummaryCache:
    """One JSON file per prompt fingerprint."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)

    def path(self, fp: str) -> Path:
        return self.directory / f"{fp}.json"

    def get(self, fp: str) -> StageSummary | None:
        p = self.path(fp)
        if not p.exists():
            return None
        return StageSummary.from_json(json.loads(p.read_text(encoding="utf-8")))

    def put(self, summary: StageSummary) -> None:
        self.directory.mkdir(parents=True, exist_ok=True)
        self.path(summary.prompt_fingerprint).write_text(
            json.dumps(summary.to_json(), sort_keys=True), encoding="utf-8"
        )


def extract_text(raw: str) -> str:
    """Pull the summary text out of a response body.

    Accepts ``{"text": ...}`` and the common chat-completion shape
    ``{"choices": [{"message": {"content": ...}}]}``.
    """
    try:
        payload = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ProviderParseError(f"response is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise ProviderParseError("response JSON is not an object")
    if "text" in payload:
        text = payload["text"]
    else:
        try:
            text = payload["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise ProviderParseError("response has no 'text' field") from None
    if not isinstance(text, str):
        raise ProviderParseError("response 'text' field is not a string")
    if not text.strip():
        raise ProviderEmptyResponseError("provider returned empty summary text")
    return text.strip()


class HttpSummaryProvider:
    kind = "http"

    def __init__(
        self,
        url: str,
        credential_env: str = "PHQFUSION_API_KEY",
        cache_dir: str | Path | None = None,
        transport: Transport | None = None,
        *,
        attempts: int = 3,
        base_delay: float = 1.0,
        timeout: float = 60.0,
        sleep: Callable[[float], None] = time.sleep,
        name: str = "http",
    ):
        self.url = url
        self.credential_env = credential_env
        self.cache = SummaryCache(cache_dir) if cache_dir else None
        self.transport = transport or httpx_transport
        self.attempts = attempts
        self.base_delay = base_delay
        self.timeout = timeout
        self.sleep = sleep
        self.name = name
        self.last_attempts: list[dict] = []

    def _headers(self) -> dict:
        if not self.url:
            raise ConfigError("provider.http.url is not configured")
        key = os.environ.get(self.credential_env, "")
        if not key:
            raise ConfigError(f"credential environment variable {self.credential_env} is not set")
        return {"Authorization": f"Bearer {key}", "Content-Type": "application/json"}

    def summarize(self, req: SummaryRequest) -> StageSummary:
        prompt = build_prompt(req)
        fp = fingerprint(prompt)
        if self.cache is not None:
            hit = self.cache.get(fp)
            if hit is not None:
                self.last_attempts = []
                return hit
        raw, self.last_attempts = post_json_with_retry(
            self.transport, self.url, {"stage": req.stage, "prompt": prompt}, self._headers(),
            timeout=self.timeout, attempts=self.attempts, base_delay=self.base_delay, sleep=self.sleep,
        )
        summary = StageSummary(req.stage, extract_text(raw), self.name, fp)
        if self.cache is not None:
            self.cache.put(summary)
        return summary


# -- corpus-level generation --------------------------------------------------------

def teacher_forced_requests(transcript: str, score: int, instrument: str) -> list[SummaryRequest]:
    """Stage requests whose prior labels come from the ground-truth score."""
    screen, severity = screen_label(score), severity_bins(score, instrument)
    return [
        SummaryRequest(1, transcript, instrument=instrument),
        SummaryRequest(2, transcript, prior_screen=screen, instrument=instrument),
        SummaryRequest(3, transcript, prior_screen=screen, prior_severity=severity, instrument=instrument),
    ]


def summarize_corpus(corpus, provider: SummaryProvider, concurrency: int = 4, stages=(1, 2, 3)):
    """Attach teacher-forced summaries for ``stages`` to every sample (in place).

    At most ``concurrency`` requests are in flight; results are attached in
    corpus order regardless of completion order.
    """
    jobs = []
    for sample in corpus.samples:
        for req in teacher_forced_requests(sample.transcript, sample.score, sample.instrument):
            if req.stage in stages:
                jobs.append((sample, req))
    workers = max(1, int(concurrency))
    if workers == 1:
        results = [provider.summarize(req) for _, req in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda job: provider.summarize(job[1]), jobs))
    for (sample, req), summary in zip(jobs, results):
        sample.summaries[req.stage] = summary
    return corpus
