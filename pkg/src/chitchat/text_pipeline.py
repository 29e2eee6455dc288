"""Query normalization and lexical feature extraction.

Queries are case-folded, stripped of junk characters and tokenized on
whitespace.  Lexical features are word n-grams (optionally with 1-skip
pairs) and per-token character trigrams.  Word grams are TF-IDF weighted
at vectorize time; char grams keep their raw counts.  The final vector is
L2-normalized over all entries.
"""
from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

MAX_QUERY_CODEPOINTS = 1024

# Anything that is not a letter, digit, underscore, apostrophe or whitespace
# becomes a space; underscores join them because feature ids may not be
# confused with token content.
_JUNK_RE = re.compile(r"[^\w\s']")

WORD_KINDS = ("w1", "w2", "w3", "w4", "ws")
CHAR_KIND = "c3"


@dataclass(frozen=True)
class RawQuery:
    """A query as logged: text plus an impression weight."""

    text: str
    weight: float = 1.0
    id: str = ""

    def __post_init__(self) -> None:
        if len(self.text.strip()) > MAX_QUERY_CODEPOINTS:
            raise ValueError(f"query text exceeds {MAX_QUERY_CODEPOINTS} code points")
        if not (self.weight >= 0.0):
            raise ValueError("query weight must be non-negative")


@dataclass(frozen=True)
class NormalizedQuery:
    """Case-folded, junk-free token view of a query.

    `tokens` has stopwords removed; `tokens_with_stopwords` keeps the full
    sequence in order.  The filtered list is always a subsequence of the
    full one.
    """

    original: str
    tokens: tuple[str, ...]
    tokens_with_stopwords: tuple[str, ...]

    @property
    def key(self) -> str:
        """Canonical exact-match key (stopword-filtered)."""
        return " ".join(self.tokens)

    @property
    def text(self) -> str:
        """Full normalized text, stopwords included."""
        return " ".join(self.tokens_with_stopwords)


def _clean(text: str) -> str:
    folded = text.casefold()
    no_junk = _JUNK_RE.sub(" ", folded).replace("_", " ")
    return no_junk


def normalize(raw: RawQuery | str, stopwords: frozenset[str] | set[str]) -> NormalizedQuery:
    """Normalize a query; empty input yields empty token lists."""
    text = raw.text if isinstance(raw, RawQuery) else raw
    all_tokens = tuple(_clean(text).split())
    kept = tuple(t for t in all_tokens if t not in stopwords)
    return NormalizedQuery(original=text, tokens=kept, tokens_with_stopwords=all_tokens)


def load_stopwords(path: str | Path | None = None) -> frozenset[str]:
    """Load a stopword list, one token per line; defaults to the bundled list."""
    if path is None:
        text = resources.files("chitchat.data").joinpath("stopwords.txt").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    return frozenset(t.strip() for t in text.splitlines() if t.strip())


@dataclass(frozen=True)
class NgramConfig:
    """Which lexical feature families to extract."""

    word_orders: frozenset[int] = frozenset({1, 2, 3})
    one_skip: bool = False
    char_trigrams: bool = True

    def __post_init__(self) -> None:
        if not frozenset(self.word_orders) <= {1, 2, 3, 4}:
            raise ValueError("word gram orders must be within 1..4")
        object.__setattr__(self, "word_orders", frozenset(self.word_orders))
        if not self.word_orders and not self.one_skip and not self.char_trigrams:
            raise ValueError("at least one feature family must be enabled")

    def to_dict(self) -> dict:
        return {
            "word_orders": sorted(self.word_orders),
            "one_skip": self.one_skip,
            "char_trigrams": self.char_trigrams,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "NgramConfig":
        return cls(
            word_orders=frozenset(d.get("word_orders", [1, 2, 3])),
            one_skip=bool(d.get("one_skip", False)),
            char_trigrams=bool(d.get("char_trigrams", True)),
        )


@dataclass
class SparseFeatureVector:
    """Feature id -> weight map; zero entries are dropped on construction."""

    entries: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.entries = {k: float(v) for k, v in self.entries.items() if v != 0.0}

    def l2_norm(self) -> float:
        return math.sqrt(math.fsum(v * v for v in self.entries.values()))

    def __len__(self) -> int:
        return len(self.entries)


def _is_word_kind(feature_id: str) -> bool:
    kind = feature_id.split(":", 1)[0]
    return kind in WORD_KINDS


def extract_ngrams(query: NormalizedQuery, config: NgramConfig) -> SparseFeatureVector:
    """Count lexical grams for one query.

    Word grams and 1-skip pairs come from the stopword-filtered tokens;
    char trigrams from every token of the full sequence, padded with
    ^ and $ so word boundaries stay visible.
    """
    counts: Counter[str] = Counter()
    toks = query.tokens
    for k in sorted(config.word_orders):
        for i in range(len(toks) - k + 1):
            counts[f"w{k}:" + " ".join(toks[i : i + k])] += 1
    if config.one_skip:
        for i in range(len(toks) - 2):
            counts[f"ws:{toks[i]} {toks[i + 2]}"] += 1
    if config.char_trigrams:
        for tok in query.tokens_with_stopwords:
            padded = f"^{tok}$"
            for i in range(len(padded) - 2):
                counts[f"{CHAR_KIND}:{padded[i : i + 3]}"] += 1
    return SparseFeatureVector({k: float(v) for k, v in counts.items()})


@dataclass(frozen=True)
class IdfTable:
    """Document frequencies over word-gram features.

    idf(f) = ln((1 + N) / (1 + df(f))) + 1, which stays positive and is
    defined for unseen features (df = 0).
    """

    document_count: int
    df: Mapping[str, int]

    def __post_init__(self) -> None:
        if self.document_count < 1:
            raise ValueError("document_count must be >= 1")
        for f, c in self.df.items():
            if not (1 <= c <= self.document_count):
                raise ValueError(f"df out of range for feature {f!r}")

    def idf(self, feature_id: str) -> float:
        df = self.df.get(feature_id, 0)
        return math.log((1.0 + self.document_count) / (1.0 + df)) + 1.0

    def save(self, path: str | Path) -> None:
        lines = [f"chitchat-idf\tv1\tdocuments={self.document_count}"]
        for f in sorted(self.df):
            lines.append(f"{self.df[f]}\t{f}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "IdfTable":
        lines = Path(path).read_text("utf-8").splitlines()
        if not lines:
            raise ValueError(f"{path}: empty idf table file")
        head = lines[0].split("\t")
        if len(head) != 3 or head[0] != "chitchat-idf" or head[1] != "v1":
            raise ValueError(f"{path}: unrecognized idf table header")
        n = int(head[2].split("=", 1)[1])
        df: dict[str, int] = {}
        for line in lines[1:]:
            if not line:
                continue
            count, feature = line.split("\t", 1)
            df[feature] = int(count)
        return cls(document_count=n, df=df)

    def to_parts(self) -> tuple[list[str], list[int], int]:
        feats = sorted(self.df)
        return feats, [self.df[f] for f in feats], self.document_count

    @classmethod
    def from_parts(cls, features: Iterable[str], counts: Iterable[int], n: int) -> "IdfTable":
        return cls(document_count=n, df=dict(zip(features, counts)))


def fit_idf(corpus: Iterable[NormalizedQuery], config: NgramConfig) -> IdfTable:
    """Count, per word-gram feature, how many corpus queries contain it."""
    df: Counter[str] = Counter()
    n = 0
    for q in corpus:
        n += 1
        feats = extract_ngrams(q, config)
        for fid in set(feats.entries):
            if _is_word_kind(fid):
                df[fid] += 1
    if n == 0:
        raise ValueError("cannot fit idf on an empty corpus")
    return IdfTable(document_count=n, df=dict(df))


def vectorize(counts: SparseFeatureVector, idf: IdfTable) -> SparseFeatureVector:
    """TF-IDF weight the word grams, keep char gram counts, L2-normalize."""
    weighted: dict[str, float] = {}
    for fid, value in counts.entries.items():
        if _is_word_kind(fid):
            weighted[fid] = value * idf.idf(fid)
        else:
            weighted[fid] = value
    norm = math.sqrt(math.fsum(v * v for v in weighted.values()))
    if norm == 0.0:
        return SparseFeatureVector({})
    return SparseFeatureVector({f: v / norm for f, v in weighted.items()})
