"""Specific intent definitions and the exact/pattern/fuzzy matcher.

Matching runs in precedence order: an exact hit on the normalized token
sequence wins outright, then anchored patterns, then fuzzy similarity of
the query embedding against each intent's curated queries.
"""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .embeddings import EmbeddingProvider, ensure_embedding
from .text_pipeline import NormalizedQuery

FUZZY_THRESHOLD = 0.9

_MACRO_RE = re.compile(r"\{([a-z0-9_]+)\}")


class MatchType(str, enum.Enum):
    EXACT = "Exact"
    PATTERN = "Pattern"
    FUZZY = "Fuzzy"
    GENERIC_MODEL = "GenericModel"


@dataclass(frozen=True)
class IntentPrediction:
    intent_id: str
    score: float
    match_type: MatchType

    def __post_init__(self) -> None:
        if not (0.0 <= self.score <= 1.0):
            raise ValueError("prediction score must lie in [0, 1]")


@dataclass
class IntentDefinition:
    """A curated intent: example queries, optional patterns, canned responses."""

    id: str
    friendly_name: str
    kind: str  # "specific" | "generic"
    curated_queries: list[tuple[NormalizedQuery, np.ndarray]] = field(default_factory=list)
    patterns: list[str] = field(default_factory=list)
    responses: list[str] = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.id or not self.id.strip():
            raise ValueError("intent id must be non-empty")
        if self.kind not in ("specific", "generic"):
            raise ValueError(f"unknown intent kind {self.kind!r}")
        if self.kind == "specific" and not self.curated_queries:
            raise ValueError(f"specific intent {self.id!r} needs at least one curated query")


def expand_pattern(pattern: str, pattern_lists: Mapping[str, Sequence[str]]) -> str:
    """Substitute {name} macros with alternation groups of list phrases."""

    def repl(m: re.Match) -> str:
        name = m.group(1)
        if name not in pattern_lists:
            raise ValueError(f"pattern references unknown list {name!r}")
        phrases = [p for p in pattern_lists[name] if p]
        if not phrases:
            raise ValueError(f"pattern list {name!r} is empty")
        return "(?:" + "|".join(re.escape(p) for p in phrases) + ")"

    return _MACRO_RE.sub(repl, pattern)


def compile_patterns(
    intent: IntentDefinition, pattern_lists: Mapping[str, Sequence[str]]
) -> list[re.Pattern]:
    """Compile an intent's patterns; raises on bad regex or unknown macro."""
    compiled = []
    for pat in intent.patterns:
        try:
            compiled.append(re.compile(expand_pattern(pat, pattern_lists)))
        except re.error as exc:
            raise ValueError(f"intent {intent.id!r}: bad pattern {pat!r}: {exc}") from exc
    return compiled


class SpecificIntentMatcher:
    """Immutable runtime index over a set of intent definitions."""

    def __init__(
        self,
        intents: Sequence[IntentDefinition],
        pattern_lists: Mapping[str, Sequence[str]] | None = None,
        fuzzy_threshold: float = FUZZY_THRESHOLD,
    ):
        if not (0.0 < fuzzy_threshold <= 1.0):
            raise ValueError("fuzzy threshold must lie in (0, 1]")
        self.fuzzy_threshold = fuzzy_threshold
        self.pattern_lists = dict(pattern_lists or {})
        self.intents = list(intents)
        seen_ids = set()
        for it in self.intents:
            if it.id in seen_ids:
                raise ValueError(f"duplicate intent id {it.id!r}")
            seen_ids.add(it.id)

        # exact: filtered-token key -> intent ids (empty keys never match)
        self.exact_index: dict[str, list[str]] = {}
        # fuzzy: stacked unit embeddings with a row -> intent map
        rows = []
        row_intents = []
        dim = None
        self.patterns: list[tuple[str, re.Pattern]] = []
        for it in sorted(self.intents, key=lambda i: i.id):
            if it.kind != "specific":
                continue
            for nq, emb in it.curated_queries:
                if nq.key:
                    self.exact_index.setdefault(nq.key, [])
                    if it.id not in self.exact_index[nq.key]:
                        self.exact_index[nq.key].append(it.id)
                arr = np.asarray(emb, dtype=np.float64)
                if dim is None:
                    dim = arr.shape[0]
                ensure_embedding(arr, dim)
                norm = float(np.linalg.norm(arr))
                if norm > 0.0:
                    rows.append(arr / norm)
                    row_intents.append(it.id)
            for rx in compile_patterns(it, self.pattern_lists):
                self.patterns.append((it.id, rx))
        self.dim = dim
        self._fuzzy_matrix = np.vstack(rows) if rows else np.zeros((0, dim or 1))
        self._fuzzy_intents = row_intents

    # -- stages ----------------------------------------------------------------

    def match_exact(self, query: NormalizedQuery) -> IntentPrediction | None:
        if not query.key:
            return None
        hits = self.exact_index.get(query.key)
        if not hits:
            return None
        return IntentPrediction(sorted(hits)[0], 1.0, MatchType.EXACT)

    def match_pattern(self, query: NormalizedQuery) -> list[IntentPrediction]:
        matched: set[str] = set()
        for intent_id, rx in self.patterns:
            if intent_id in matched:
                continue
            if rx.fullmatch(query.text):
                matched.add(intent_id)
        return [IntentPrediction(i, 1.0, MatchType.PATTERN) for i in sorted(matched)]

    def match_fuzzy(
        self, query_embedding: np.ndarray, threshold: float | None = None
    ) -> list[IntentPrediction]:
        """Per intent, the max cosine between the query and curated queries."""
        threshold = self.fuzzy_threshold if threshold is None else threshold
        if self._fuzzy_matrix.shape[0] == 0:
            return []
        q = np.asarray(query_embedding, dtype=np.float64)
        ensure_embedding(q, self._fuzzy_matrix.shape[1])
        qnorm = float(np.linalg.norm(q))
        if qnorm == 0.0:
            return []
        sims = self._fuzzy_matrix @ (q / qnorm)
        best: dict[str, float] = {}
        for intent_id, sim in zip(self._fuzzy_intents, sims):
            s = float(min(1.0, max(-1.0, sim)))
            if s > best.get(intent_id, -2.0):
                best[intent_id] = s
        hits = [(i, s) for i, s in best.items() if s >= threshold]
        hits.sort(key=lambda h: (-h[1], h[0]))
        return [IntentPrediction(i, max(0.0, s), MatchType.FUZZY) for i, s in hits]

    def match(
        self,
        query: NormalizedQuery,
        query_embedding: np.ndarray | None = None,
        provider: EmbeddingProvider | None = None,
    ) -> list[IntentPrediction]:
        """Exact, then pattern, then fuzzy; first stage with hits wins."""
        exact = self.match_exact(query)
        if exact is not None:
            return [exact]
        patterns = self.match_pattern(query)
        if patterns:
            return sorted(patterns, key=lambda p: (-p.score, p.intent_id))
        if query_embedding is None:
            if provider is None:
                return []
            query_embedding = provider.embed(query)
        return self.match_fuzzy(query_embedding)


def match_exact(query: NormalizedQuery, store: SpecificIntentMatcher) -> IntentPrediction | None:
    return store.match_exact(query)


def match_pattern(query: NormalizedQuery, store: SpecificIntentMatcher) -> list[IntentPrediction]:
    return store.match_pattern(query)


def match_fuzzy(
    query_embedding: np.ndarray, store: SpecificIntentMatcher, threshold: float | None = None
) -> list[IntentPrediction]:
    return store.match_fuzzy(query_embedding, threshold)


def match_specific(
    query: NormalizedQuery,
    store: SpecificIntentMatcher,
    query_embedding: np.ndarray | None = None,
    provider: EmbeddingProvider | None = None,
) -> list[IntentPrediction]:
    return store.match(query, query_embedding, provider)
