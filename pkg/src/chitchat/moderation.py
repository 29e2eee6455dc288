"""Adult and offensive content scoring.

An external moderation service is the intended production source; a local
lexicon scorer backs it up.  Which one answers is recorded in the signal
so downstream audit trails can tell them apart.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Literal, Protocol

import httpx

from .text_pipeline import normalize

_NO_STOPWORDS: frozenset[str] = frozenset()


class ModerationError(Exception):
    """External moderation failed or timed out."""


@dataclass(frozen=True)
class ModerationSignal:
    adult_score: float
    offensive_score: float
    source: Literal["external", "local"]

    def __post_init__(self) -> None:
        for v in (self.adult_score, self.offensive_score):
            if not (0.0 <= v <= 1.0):
                raise ValueError("moderation scores must lie in [0, 1]")


@dataclass(frozen=True)
class ModerationConfig:
    endpoint: str | None = None
    credential_env: str | None = None
    timeout_ms: int = 200
    policy: Literal["fallback", "fail"] = "fallback"
    adult_lexicon: str | None = None
    offensive_lexicon: str | None = None

    def __post_init__(self) -> None:
        if self.policy not in ("fallback", "fail"):
            raise ValueError(f"unknown moderation policy {self.policy!r}")
        if self.timeout_ms <= 0:
            raise ValueError("timeout_ms must be positive")


class ModerationClient(Protocol):
    def score(self, text: str) -> tuple[float, float]: ...


def _load_terms(path: str | None, default_name: str) -> frozenset[str]:
    if path is None:
        text = resources.files("chitchat.data").joinpath(default_name).read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    return frozenset(t.strip() for t in text.splitlines() if t.strip())


class LocalLexiconScorer:
    """Token-hit scorer: score = 1 - exp(-hits), order-insensitive."""

    def __init__(self, config: ModerationConfig | None = None):
        config = config or ModerationConfig()
        self.adult_terms = _load_terms(config.adult_lexicon, "lexicon_adult.txt")
        self.offensive_terms = _load_terms(config.offensive_lexicon, "lexicon_offensive.txt")

    def score(self, text: str) -> tuple[float, float]:
        tokens = normalize(text, _NO_STOPWORDS).tokens_with_stopwords
        adult_hits = sum(1 for t in tokens if t in self.adult_terms)
        offensive_hits = sum(1 for t in tokens if t in self.offensive_terms)
        return 1.0 - math.exp(-adult_hits), 1.0 - math.exp(-offensive_hits)


class ExternalModerationClient:
    """HTTP adapter: POSTs {"text": ...} and reads adult/offensive scores.

    The wire contract is adapter-local; swap this class to integrate a
    different vendor.
    """

    def __init__(self, config: ModerationConfig, transport: httpx.BaseTransport | None = None):
        if not config.endpoint:
            raise ValueError("external moderation requires an endpoint")
        self.config = config
        self._client = httpx.Client(
            timeout=config.timeout_ms / 1000.0,
            transport=transport,
        )

    def score(self, text: str) -> tuple[float, float]:
        headers = {}
        if self.config.credential_env:
            token = os.environ.get(self.config.credential_env)
            if not token:
                raise ModerationError(
                    f"credential env var {self.config.credential_env!r} is not set"
                )
            headers["Authorization"] = f"Bearer {token}"
        try:
            resp = self._client.post(self.config.endpoint, json={"text": text}, headers=headers)
            resp.raise_for_status()
            payload = resp.json()
            return float(payload["adult_score"]), float(payload["offensive_score"])
        except (httpx.HTTPError, KeyError, TypeError, ValueError) as exc:
            raise ModerationError(f"external moderation failed: {exc}") from exc


def _clamp(v: float) -> float:
    return min(1.0, max(0.0, v))


def moderate(
    text: str,
    config: ModerationConfig | None = None,
    client: ModerationClient | None = None,
    local: LocalLexiconScorer | None = None,
) -> ModerationSignal:
    """Score a query; falls back to the local lexicon per config.policy."""
    config = config or ModerationConfig()
    if client is None and config.endpoint:
        client = ExternalModerationClient(config)
    if client is not None:
        try:
            adult, offensive = client.score(text)
            return ModerationSignal(_clamp(adult), _clamp(offensive), "external")
        except ModerationError:
            if config.policy == "fail":
                raise
    scorer = local or LocalLexiconScorer(config)
    adult, offensive = scorer.score(text)
    return ModerationSignal(_clamp(adult), _clamp(offensive), "local")
