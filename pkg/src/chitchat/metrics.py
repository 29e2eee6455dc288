"""Evaluation metrics for the understanding pipeline.

The eval command prints exactly what these functions compute, so tests
and operators always agree on definitions.  Domain detection is scored
as binary precision/recall/F1, both frequency-weighted and unweighted;
generic intents are scored as accuracy on seen and held-out splits; and
coverage reports which component ends up answering the chat traffic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .pipeline import PipelineBundle

DOMAINS = ("chat", "task", "information", "junk")
SPLITS = ("seen", "held")
COVERAGE_KEYS = ("Exact", "Pattern", "Fuzzy", "GenericModel", "unhandled")


@dataclass(frozen=True)
class PrfScores:
    precision: float
    recall: float
    f1: float

    def to_dict(self) -> dict:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1}


def precision_recall_f1(tp: float, fp: float, fn: float) -> PrfScores:
    """P/R/F1 from (possibly weighted) counts; empty denominators score 0."""
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = (
        2.0 * precision * recall / (precision + recall)
        if precision + recall > 0
        else 0.0
    )
    return PrfScores(precision, recall, f1)


def binary_prf(
    rows: Iterable[tuple[bool, bool, float]], weighted: bool = False
) -> PrfScores:
    """Score (truth, predicted, weight) rows; weights count once each when off."""
    tp = fp = fn = 0.0
    for truth, predicted, weight in rows:
        w = float(weight) if weighted else 1.0
        if w < 0.0:
            raise ValueError("row weight must be non-negative")
        if predicted and truth:
            tp += w
        elif predicted and not truth:
            fp += w
        elif truth:
            fn += w
    return precision_recall_f1(tp, fp, fn)


@dataclass(frozen=True)
class EvalRow:
    text: str
    weight: float
    domain: str
    intent: str | None
    split: str

    def __post_init__(self) -> None:
        if self.domain not in DOMAINS:
            raise ValueError(f"unknown domain label {self.domain!r}")
        if self.split not in SPLITS:
            raise ValueError(f"unknown split label {self.split!r}")
        if not (self.weight >= 0.0):
            raise ValueError("row weight must be non-negative")


def load_eval_rows(path: str | Path) -> list[EvalRow]:
    """Parse a testset file: text, weight, domain, intent or -, seen|held."""
    rows = []
    for lineno, line in enumerate(Path(path).read_text("utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 5:
            raise ValueError(f"{path}:{lineno}: expected 5 tab-separated fields")
        text, weight, domain, intent, split = parts
        try:
            rows.append(
                EvalRow(
                    text=text,
                    weight=float(weight),
                    domain=domain,
                    intent=None if intent == "-" else intent,
                    split=split,
                )
            )
        except ValueError as e:
            raise ValueError(f"{path}:{lineno}: {e}") from None
    return rows


@dataclass(frozen=True)
class EvalReport:
    domain_weighted: PrfScores
    domain_unweighted: PrfScores
    generic_accuracy: dict[str, float | None]
    coverage: dict[str, float]
    query_count: int

    def to_dict(self) -> dict:
        return {
            "domain": {
                "weighted": self.domain_weighted.to_dict(),
                "unweighted": self.domain_unweighted.to_dict(),
            },
            "generic_accuracy": dict(self.generic_accuracy),
            "coverage": dict(self.coverage),
            "query_count": self.query_count,
        }

    def format_lines(self) -> list[str]:
        def prf(s: PrfScores) -> str:
            return (
                f"precision={s.precision:.4f} recall={s.recall:.4f} f1={s.f1:.4f}"
            )

        def acc(value: float | None) -> str:
            return "n/a" if value is None else f"{value:.4f}"

        lines = [
            f"queries evaluated    {self.query_count}",
            f"domain (weighted)    {prf(self.domain_weighted)}",
            f"domain (unweighted)  {prf(self.domain_unweighted)}",
            "generic accuracy     "
            + " ".join(f"{k}={acc(self.generic_accuracy[k])}" for k in SPLITS),
            "coverage             "
            + " ".join(f"{k}={self.coverage[k]:.4f}" for k in COVERAGE_KEYS),
        ]
        return lines


def _top_generic(distribution: dict[str, float]) -> str | None:
    if not distribution:
        return None
    return sorted(distribution.items(), key=lambda kv: (-kv[1], kv[0]))[0][0]


def evaluate_pipeline(bundle: PipelineBundle, rows: Sequence[EvalRow]) -> EvalReport:
    """Run every row through the bundle and score all the report sections."""
    domain_rows = []
    generic_hits: dict[str, list[float]] = {split: [] for split in SPLITS}
    coverage_mass = {key: 0.0 for key in COVERAGE_KEYS}
    chat_mass = 0.0
    for row in rows:
        response = bundle.understand(row.text, trace=True)
        is_chat = row.domain == "chat"
        predicted_chat = response["chat_probability"] >= 0.5
        domain_rows.append((is_chat, predicted_chat, row.weight))
        if is_chat:
            chat_mass += row.weight
            top = response["intents"][0]["match_type"] if response["intents"] else None
            coverage_mass[top if top in coverage_mass else "unhandled"] += row.weight
        if is_chat and row.intent is not None:
            predicted = _top_generic(response["trace"]["generic"])
            if predicted is not None:
                generic_hits[row.split].append(1.0 if predicted == row.intent else 0.0)
    generic_accuracy: dict[str, float | None] = {}
    for split in SPLITS:
        hits = generic_hits[split]
        generic_accuracy[split] = math.fsum(hits) / len(hits) if hits else None
    coverage = {
        key: (mass / chat_mass if chat_mass > 0 else 0.0)
        for key, mass in coverage_mass.items()
    }
    return EvalReport(
        domain_weighted=binary_prf(domain_rows, weighted=True),
        domain_unweighted=binary_prf(domain_rows, weighted=False),
        generic_accuracy=generic_accuracy,
        coverage=coverage,
        query_count=len(rows),
    )
