"""Wire the trained stages into a single query understanding call.

A bundle holds everything one request needs: the chat domain model, the
specific intent matcher built from a store snapshot, the generic intent
classifier, moderation settings, and the aggregation rules.  Bundles are
immutable once built, so a running service can swap one for another
between requests without locking.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Mapping

from . import aggregator, chat_domain, generic_intent
from .aggregator import RulesConfig
from .embeddings import (
    EmbeddingProvider,
    default_semantic_provider,
    default_sentiment_provider,
    provider_from_spec,
)
from .intent_store import IntentStore
from .moderation import ModerationConfig, moderate
from .specific_intent import SpecificIntentMatcher
from .text_pipeline import RawQuery, load_stopwords, normalize

RESPONSE_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class PipelineBundle:
    """Immutable snapshot of every model a request touches."""

    stopwords: frozenset[str]
    semantic: EmbeddingProvider
    sentiment: EmbeddingProvider
    domain_model: chat_domain.ChatDomainModel | None = None
    generic_model: generic_intent.GenericIntentModel | None = None
    matcher: SpecificIntentMatcher | None = None
    intent_meta: Mapping[str, tuple[str, str]] = field(default_factory=dict)
    store_version: int | None = None
    rules: RulesConfig = field(default_factory=RulesConfig)
    moderation: ModerationConfig = field(default_factory=ModerationConfig)

    @classmethod
    def from_paths(
        cls,
        domain_model: str | None = None,
        generic_model: str | None = None,
        store: str | None = None,
        store_version: int | str = "latest",
        rules: str | None = None,
        moderation: ModerationConfig | None = None,
        fuzzy_threshold: float | None = None,
        semantic: EmbeddingProvider | None = None,
        sentiment: EmbeddingProvider | None = None,
    ) -> "PipelineBundle":
        stopwords = load_stopwords()
        dom = chat_domain.load_model(domain_model) if domain_model else None
        if dom is not None:
            stopwords = dom.stopwords
            if semantic is None:
                semantic = provider_from_spec(dom.config.provider_spec)
        gen = generic_intent.load_model(generic_model) if generic_model else None
        matcher = None
        meta: dict[str, tuple[str, str]] = {}
        version = None
        if store is not None:
            snapshot = IntentStore(store).load(store_version)
            kwargs = {} if fuzzy_threshold is None else {"fuzzy_threshold": fuzzy_threshold}
            matcher = SpecificIntentMatcher(
                snapshot.intents, snapshot.pattern_lists, **kwargs
            )
            meta = {i.id: (i.friendly_name, i.kind) for i in snapshot.intents}
            version = snapshot.version
        return cls(
            stopwords=stopwords,
            semantic=semantic or default_semantic_provider(),
            sentiment=sentiment or default_sentiment_provider(),
            domain_model=dom,
            generic_model=gen,
            matcher=matcher,
            intent_meta=meta,
            store_version=version,
            rules=RulesConfig.load(rules) if rules else RulesConfig(),
            moderation=moderation or ModerationConfig(),
        )

    def loaded(self) -> bool:
        """True once the bundle can answer queries at all."""
        return self.domain_model is not None

    def understand(self, text: str, trace: bool = False) -> dict:
        """Run the full pipeline over one query and shape the wire response."""
        if self.domain_model is None:
            raise RuntimeError("no chat domain model loaded")
        if not text or not text.strip():
            raise ValueError("query text is empty")
        start = time.perf_counter()
        raw = RawQuery(text=text)
        nq = normalize(raw, self.stopwords)
        chat = chat_domain.score(raw, self.domain_model, self.semantic)
        signal = moderate(text, self.moderation)
        query_embedding = self.semantic.embed(nq)
        specific = (
            self.matcher.match(nq, query_embedding=query_embedding)
            if self.matcher is not None
            else []
        )
        generic: dict[str, float] = {}
        if self.generic_model is not None:
            features = generic_intent.assemble_features(
                query_embedding, self.sentiment.embed(nq), signal, chat
            )
            generic = generic_intent.predict_generic(features, self.generic_model)
        result = aggregator.aggregate(specific, generic, signal, chat, self.rules)
        elapsed_ms = (time.perf_counter() - start) * 1000.0
        response = {
            "schema_version": RESPONSE_SCHEMA_VERSION,
            "chat_probability": result.chat_probability,
            "intents": [self._intent_entry(p) for p in result.intents],
            "safe_for_autogeneration": result.safe_for_autogeneration,
            "applied_rules": list(result.applied_rules),
            "latency_ms": round(elapsed_ms, 3),
        }
        if trace:
            response["trace"] = {
                "normalized_text": nq.text,
                "tokens": list(nq.tokens),
                "chat": {
                    "lexical_score": chat.lexical_score,
                    "semantic_score": chat.semantic_score,
                    "probability": chat.probability,
                },
                "moderation": {
                    "adult_score": signal.adult_score,
                    "offensive_score": signal.offensive_score,
                    "source": signal.source,
                },
                "specific": [
                    {"id": p.intent_id, "score": p.score, "match_type": p.match_type.value}
                    for p in specific
                ],
                "generic": dict(generic),
                "store_version": self.store_version,
            }
        return response

    def _intent_entry(self, prediction) -> dict:
        friendly, kind = self.intent_meta.get(
            prediction.intent_id, (prediction.intent_id, "generic")
        )
        return {
            "id": prediction.intent_id,
            "friendly_name": friendly,
            "kind": kind,
            "score": prediction.score,
            "match_type": prediction.match_type.value,
        }
