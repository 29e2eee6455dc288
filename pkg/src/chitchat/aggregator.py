"""Final assembly of the understanding result.

Specific matches always outrank generic classes.  A small rule set guards
autogenerated answers: criticism directed at the bot, criticism of the
previous response (which invalidates fuzzy matches), and moderation flags
all mark the query unsafe or discard shaky matches.  Every rule that fires
is recorded so responses can be audited.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .chat_domain import ChatDomainScore
from .moderation import ModerationSignal
from .specific_intent import IntentPrediction, MatchType

RULE_CRITICISM_GENERIC = "R1"
RULE_CRITICISM_RESPONSE = "R2"
RULE_MODERATION = "R3"
KNOWN_RULES = (RULE_CRITICISM_GENERIC, RULE_CRITICISM_RESPONSE, RULE_MODERATION)


@dataclass(frozen=True)
class RulesConfig:
    enabled: tuple[str, ...] = KNOWN_RULES
    criticism_generic_intent: str = "criticism_generic"
    criticism_response_intent: str = "criticism_response"
    criticism_generic_threshold: float = 0.5
    criticism_response_threshold: float = 0.5
    moderation_threshold: float = 0.8
    generic_floor: float = 0.2
    scale_gap: float = 0.99

    def __post_init__(self) -> None:
        unknown = [r for r in self.enabled if r not in KNOWN_RULES]
        if unknown:
            raise ValueError(f"unknown rule ids: {unknown}")
        for name in (
            "criticism_generic_threshold",
            "criticism_response_threshold",
            "moderation_threshold",
            "generic_floor",
        ):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1]")
        if not (0.0 < self.scale_gap < 1.0):
            raise ValueError("scale_gap must lie in (0, 1)")

    @classmethod
    def load(cls, path: str | Path) -> "RulesConfig":
        doc = json.loads(Path(path).read_text("utf-8"))
        if not isinstance(doc, dict):
            raise ValueError(f"{path}: rules config must be a JSON object")
        known_fields = {
            "enabled",
            "criticism_generic_intent",
            "criticism_response_intent",
            "criticism_generic_threshold",
            "criticism_response_threshold",
            "moderation_threshold",
            "generic_floor",
            "scale_gap",
        }
        unknown = sorted(set(doc) - known_fields)
        if unknown:
            raise ValueError(f"{path}: unknown rules config fields: {unknown}")
        if "enabled" in doc:
            doc["enabled"] = tuple(doc["enabled"])
        return cls(**doc)

    def to_json(self) -> dict:
        return {
            "enabled": list(self.enabled),
            "criticism_generic_intent": self.criticism_generic_intent,
            "criticism_response_intent": self.criticism_response_intent,
            "criticism_generic_threshold": self.criticism_generic_threshold,
            "criticism_response_threshold": self.criticism_response_threshold,
            "moderation_threshold": self.moderation_threshold,
            "generic_floor": self.generic_floor,
            "scale_gap": self.scale_gap,
        }


@dataclass(frozen=True)
class AggregatedResult:
    intents: tuple[IntentPrediction, ...]
    safe_for_autogeneration: bool
    chat_probability: float
    applied_rules: tuple[str, ...]


def aggregate(
    specific: Sequence[IntentPrediction],
    generic: Mapping[str, float],
    moderation: ModerationSignal,
    chat: ChatDomainScore,
    rules: RulesConfig | None = None,
) -> AggregatedResult:
    """Merge stage outputs into one ranked, safety-gated result."""
    rules = rules or RulesConfig()
    applied: list[str] = []
    safe = True

    if RULE_CRITICISM_GENERIC in rules.enabled:
        p = generic.get(rules.criticism_generic_intent, 0.0)
        if p > rules.criticism_generic_threshold:
            safe = False
            applied.append(RULE_CRITICISM_GENERIC)

    surviving = list(specific)
    if RULE_CRITICISM_RESPONSE in rules.enabled:
        p = generic.get(rules.criticism_response_intent, 0.0)
        if p >= rules.criticism_response_threshold:
            kept = [s for s in surviving if s.match_type is not MatchType.FUZZY]
            if len(kept) != len(surviving):
                applied.append(RULE_CRITICISM_RESPONSE)
            surviving = kept

    if RULE_MODERATION in rules.enabled:
        if max(moderation.adult_score, moderation.offensive_score) >= rules.moderation_threshold:
            safe = False
            applied.append(RULE_MODERATION)

    ranked = sorted(surviving, key=lambda p: (-p.score, p.intent_id))
    generic_hits = sorted(
        ((i, p) for i, p in generic.items() if p > rules.generic_floor),
        key=lambda ip: (-ip[1], ip[0]),
    )
    if ranked:
        # generic scores are squeezed strictly below the weakest specific hit
        ceiling = ranked[-1].score * rules.scale_gap
        appended = [
            IntentPrediction(i, p * ceiling, MatchType.GENERIC_MODEL) for i, p in generic_hits
        ]
    else:
        appended = [IntentPrediction(i, p, MatchType.GENERIC_MODEL) for i, p in generic_hits]

    return AggregatedResult(
        intents=tuple(ranked + appended),
        safe_for_autogeneration=safe,
        chat_probability=chat.probability,
        applied_rules=tuple(applied),
    )
