"""Generic intent classification over a fixed 453-dim feature layout.

Feature vector: semantic embedding (300) | sentiment embedding (150) |
adult score (1) | offensive score (1) | chat-domain probability (1).
The classifier is a feed-forward net with two sigmoid hidden layers of
300 units and a softmax output over the intent classes.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import serialization
from .chat_domain import ChatDomainScore
from .embeddings import SEMANTIC_DIM, SENTIMENT_DIM, ensure_embedding
from .moderation import ModerationSignal
from .nn import FeedForward, SgdConfig

FEATURE_DIM = SEMANTIC_DIM + SENTIMENT_DIM + 3  # 453
HIDDEN_UNITS = 300


def assemble_features(
    semantic: np.ndarray,
    sentiment: np.ndarray,
    moderation: ModerationSignal,
    chat: ChatDomainScore,
) -> np.ndarray:
    """Concatenate the per-stage signals in the fixed layout."""
    sem = ensure_embedding(semantic, SEMANTIC_DIM)
    sen = ensure_embedding(sentiment, SENTIMENT_DIM)
    if not (0.0 <= chat.probability <= 1.0):
        raise ValueError("chat probability must lie in [0, 1]")
    tail = np.array(
        [moderation.adult_score, moderation.offensive_score, chat.probability], dtype=np.float64
    )
    return np.concatenate([sem, sen, tail])


@dataclass(frozen=True)
class GenericTrainConfig:
    seed: int = 0
    epochs: int = 100
    batch_size: int = 16
    learning_rate: float = 0.05
    momentum: float = 0.9
    l2: float = 1e-5
    min_examples: int = 5
    holdout_fraction: float = 0.1

    def __post_init__(self) -> None:
        if not (0.0 <= self.holdout_fraction < 0.5):
            raise ValueError("holdout_fraction must lie in [0, 0.5)")
        if self.min_examples < 1:
            raise ValueError("min_examples must be positive")

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "momentum": self.momentum,
            "l2": self.l2,
            "min_examples": self.min_examples,
            "holdout_fraction": self.holdout_fraction,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "GenericTrainConfig":
        return cls(**dict(d))


@dataclass(frozen=True)
class GenericIntentModel:
    net: FeedForward
    class_ids: tuple[str, ...]
    config: GenericTrainConfig
    holdout_accuracy: float | None = None


def train_generic(
    examples: Sequence[tuple[np.ndarray, str]], config: GenericTrainConfig | None = None
) -> GenericIntentModel:
    """Fit the classifier; deterministic given config.seed and example content.

    Examples are (feature vector, class id).  Input order does not matter:
    training canonicalizes the order internally.
    """
    config = config or GenericTrainConfig()
    if not examples:
        raise ValueError("no training examples")
    class_ids = tuple(sorted({label for _, label in examples}))
    if len(class_ids) < 2:
        raise ValueError("training requires at least two classes")
    counts = {c: 0 for c in class_ids}
    for _, label in examples:
        counts[label] += 1
    starved = sorted(c for c, n in counts.items() if n < config.min_examples)
    if starved:
        raise ValueError(
            f"classes below min_examples={config.min_examples}: {starved}"
        )

    index = {c: i for i, c in enumerate(class_ids)}
    ordered = sorted(
        examples, key=lambda ex: (index[ex[1]], ensure_embedding(ex[0], FEATURE_DIM).tobytes())
    )
    X = np.vstack([ensure_embedding(v, FEATURE_DIM) for v, _ in ordered])
    y = np.array([index[label] for _, label in ordered], dtype=np.int64)

    # Deterministic stratified holdout: every k-th example within a class.
    holdout_mask = np.zeros(len(ordered), dtype=bool)
    if config.holdout_fraction > 0.0:
        stride = max(2, int(round(1.0 / config.holdout_fraction)))
        for c in range(len(class_ids)):
            rows = np.flatnonzero(y == c)
            candidate = rows[::stride]
            # keep at least one training example per class
            if len(candidate) < len(rows):
                holdout_mask[candidate] = True
    train_mask = ~holdout_mask

    net = FeedForward.init(
        (FEATURE_DIM, HIDDEN_UNITS, HIDDEN_UNITS, len(class_ids)), "softmax", config.seed
    )
    net.train(
        X[train_mask],
        y[train_mask],
        None,
        SgdConfig(
            epochs=config.epochs,
            batch_size=config.batch_size,
            learning_rate=config.learning_rate,
            momentum=config.momentum,
            l2=config.l2,
            seed=config.seed,
        ),
    )
    holdout_accuracy = None
    if holdout_mask.any():
        probs = net.forward(X[holdout_mask])
        holdout_accuracy = float(np.mean(np.argmax(probs, axis=1) == y[holdout_mask]))
    return GenericIntentModel(
        net=net, class_ids=class_ids, config=config, holdout_accuracy=holdout_accuracy
    )


def predict_generic(features: np.ndarray, model: GenericIntentModel) -> dict[str, float]:
    """Distribution over class ids; sums to 1 up to float error."""
    vec = ensure_embedding(features, FEATURE_DIM)
    probs = model.net.forward(vec)[0]
    return {c: float(p) for c, p in zip(model.class_ids, probs)}


_KIND = "generic-intent-model"


def save_model(model: GenericIntentModel, path: str) -> None:
    meta = {
        "config": model.config.to_dict(),
        "class_ids": list(model.class_ids),
        "holdout_accuracy": model.holdout_accuracy,
        "net_sizes": list(model.net.sizes),
    }
    serialization.write_container(path, _KIND, meta, model.net.to_arrays("net_"))


def load_model(path: str) -> GenericIntentModel:
    meta, arrays = serialization.read_container(path, _KIND)
    net = FeedForward.from_arrays(tuple(meta["net_sizes"]), "softmax", arrays, "net_")
    return GenericIntentModel(
        net=net,
        class_ids=tuple(meta["class_ids"]),
        config=GenericTrainConfig.from_dict(meta["config"]),
        holdout_accuracy=meta.get("holdout_accuracy"),
    )
