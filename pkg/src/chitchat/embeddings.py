"""Deterministic dense query embeddings and cosine similarity.

Production deployments plug in precomputed sentence embeddings through
``LookupEmbeddingProvider``; the default providers hash word grams into a
fixed-dimensional space so the whole pipeline runs without any model
downloads and reproduces bit-for-bit across runs.
"""
from __future__ import annotations

import hashlib
import math
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .text_pipeline import NormalizedQuery

SEMANTIC_DIM = 300
SENTIMENT_DIM = 150
_SENTIMENT_BAND = 30


def ensure_embedding(values: np.ndarray, dim: int) -> np.ndarray:
    """Validate shape and finiteness; returns a float64 view."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.shape != (dim,):
        raise ValueError(f"expected embedding of dim {dim}, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("embedding contains non-finite values")
    return arr


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity; zero vectors score 0; mismatched dims are an error."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"cosine requires equal 1-d shapes, got {a.shape} and {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def _stable_hash(feature: str) -> int:
    digest = hashlib.blake2b(feature.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


class EmbeddingProvider:
    """Interface: a named, fixed-dimension, deterministic text embedder."""

    name: str = "base"
    dim: int = 0
    deterministic: bool = True

    def embed(self, query: NormalizedQuery) -> np.ndarray:
        raise NotImplementedError

    def spec(self) -> str:
        raise NotImplementedError


def _hash_grams(tokens: tuple[str, ...], dim: int, orders: tuple[int, ...]) -> np.ndarray:
    vec = np.zeros(dim, dtype=np.float64)
    for k in orders:
        for i in range(len(tokens) - k + 1):
            h = _stable_hash(f"{k}|" + " ".join(tokens[i : i + k]))
            idx = (h & 0xFFFFFFFF) % dim
            sign = 1.0 if (h >> 32) & 1 else -1.0
            vec[idx] += sign
    return vec


class HashingEmbeddingProvider(EmbeddingProvider):
    """Hash word grams of the stopword-filtered tokens into ±1 projections.

    The filtered token list is used so that queries equal under exact
    matching embed identically.
    """

    def __init__(self, dim: int = SEMANTIC_DIM, orders: tuple[int, ...] = (1,)):
        if dim < 1:
            raise ValueError("embedding dim must be positive")
        self.dim = dim
        self.orders = tuple(orders)
        self.name = f"hash:{dim}"

    def embed(self, query: NormalizedQuery) -> np.ndarray:
        vec = _hash_grams(query.tokens, self.dim, self.orders)
        norm = float(np.linalg.norm(vec))
        if norm > 0.0:
            vec /= norm
        return vec

    def spec(self) -> str:
        return f"hash:{self.dim}"


def _load_lexicon(name: str) -> frozenset[str]:
    text = resources.files("chitchat.data").joinpath(name).read_text("utf-8")
    return frozenset(t.strip() for t in text.splitlines() if t.strip())


class SentimentHashingProvider(EmbeddingProvider):
    """Hashed projection with a dedicated sentiment band.

    The last ``_SENTIMENT_BAND`` dims carry tanh(positive hits - negative
    hits) spread over a fixed sign pattern, so queries that differ only in
    polarity ("i love you" vs "i hate you") land measurably apart.
    """

    def __init__(self, dim: int = SENTIMENT_DIM):
        if dim <= _SENTIMENT_BAND:
            raise ValueError(f"sentiment dim must exceed {_SENTIMENT_BAND}")
        self.dim = dim
        self.name = f"hash-sentiment:{dim}"
        self.positive = _load_lexicon("sentiment_positive.txt")
        self.negative = _load_lexicon("sentiment_negative.txt")
        pattern = np.array(
            [1.0 if (_stable_hash(f"sentiment-band|{i}") & 1) else -1.0 for i in range(_SENTIMENT_BAND)]
        )
        self._band = pattern / math.sqrt(_SENTIMENT_BAND)

    def embed(self, query: NormalizedQuery) -> np.ndarray:
        head_dim = self.dim - _SENTIMENT_BAND
        head = _hash_grams(query.tokens, head_dim, (1,))
        norm = float(np.linalg.norm(head))
        if norm > 0.0:
            head /= norm
        pos = sum(1 for t in query.tokens if t in self.positive)
        neg = sum(1 for t in query.tokens if t in self.negative)
        polarity = math.tanh(float(pos - neg))
        vec = np.concatenate([head, polarity * self._band])
        total = float(np.linalg.norm(vec))
        if total > 0.0:
            vec /= total
        return vec

    def spec(self) -> str:
        return f"hash-sentiment:{self.dim}"


class LookupEmbeddingProvider(EmbeddingProvider):
    """Exact lookup of precomputed embeddings with a declared fallback.

    File format, one record per line after the header::

        chitchat-embeddings v1 dim=<d>
        <normalized text>\\t<v1> <v2> ... <vd>

    Keys are the stopword-filtered normalized text.
    """

    def __init__(self, path: str | Path, fallback: EmbeddingProvider):
        self.path = str(path)
        self.fallback = fallback
        self.table: dict[str, np.ndarray] = {}
        lines = Path(path).read_text("utf-8").splitlines()
        if not lines:
            raise ValueError(f"{path}: empty embedding file")
        head = lines[0].split()
        if len(head) != 3 or head[0] != "chitchat-embeddings" or head[1] != "v1":
            raise ValueError(f"{path}: unrecognized embedding file header")
        self.dim = int(head[2].split("=", 1)[1])
        if fallback.dim != self.dim:
            raise ValueError(
                f"fallback dim {fallback.dim} does not match file dim {self.dim}"
            )
        for line in lines[1:]:
            if not line:
                continue
            key, values = line.split("\t", 1)
            vec = np.array([float(x) for x in values.split()], dtype=np.float64)
            self.table[key] = ensure_embedding(vec, self.dim)
        self.name = f"lookup:{self.path}"

    def embed(self, query: NormalizedQuery) -> np.ndarray:
        hit = self.table.get(query.key)
        if hit is not None:
            return hit.copy()
        return self.fallback.embed(query)

    def spec(self) -> str:
        return f"lookup:{self.path}:{self.fallback.spec()}"


def write_embedding_file(path: str | Path, dim: int, records: Iterable[tuple[str, np.ndarray]]) -> None:
    lines = [f"chitchat-embeddings v1 dim={dim}"]
    for key, vec in records:
        arr = ensure_embedding(vec, dim)
        lines.append(key + "\t" + " ".join(repr(float(x)) for x in arr))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def provider_from_spec(spec: str) -> EmbeddingProvider:
    """Build a provider from a spec string like ``hash:300`` or
    ``lookup:/path/file.txt:hash:300``."""
    if spec.startswith("hash-sentiment:"):
        return SentimentHashingProvider(dim=int(spec.split(":", 1)[1]))
    if spec.startswith("hash:"):
        return HashingEmbeddingProvider(dim=int(spec.split(":", 1)[1]))
    if spec.startswith("lookup:"):
        rest = spec[len("lookup:") :]
        path, fallback_spec = rest.split(":", 1)
        return LookupEmbeddingProvider(path, provider_from_spec(fallback_spec))
    raise ValueError(f"unrecognized embedding provider spec {spec!r}")


def default_semantic_provider() -> EmbeddingProvider:
    return HashingEmbeddingProvider(SEMANTIC_DIM)


def default_sentiment_provider() -> EmbeddingProvider:
    return SentimentHashingProvider(SENTIMENT_DIM)


def embed_semantic(query: NormalizedQuery, provider: EmbeddingProvider | None = None) -> np.ndarray:
    provider = provider or default_semantic_provider()
    return ensure_embedding(provider.embed(query), provider.dim)


def embed_sentiment(query: NormalizedQuery, provider: EmbeddingProvider | None = None) -> np.ndarray:
    provider = provider or default_sentiment_provider()
    return ensure_embedding(provider.embed(query), provider.dim)
