"""Chat-domain detection: is a query small talk or a task/information request?

Three cooperating parts, all interpretable on purpose:

- a linear SVM over sparse lexical grams, whose per-feature weights can be
  read and overridden by operators;
- a small feed-forward net over the semantic embedding;
- a shallow decision tree that combines the two scores, trained on
  out-of-fold predictions so it sees honest inputs.

Human-judged labels use a fixed four-judge consensus; judged examples are
weighted 5x against augmented ones.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import sparse

from . import serialization
from .embeddings import EmbeddingProvider, provider_from_spec
from .nn import FeedForward, SgdConfig
from .text_pipeline import (
    IdfTable,
    NgramConfig,
    NormalizedQuery,
    RawQuery,
    SparseFeatureVector,
    extract_ngrams,
    fit_idf,
    load_stopwords,
    normalize,
    vectorize,
)

JUDGES_PER_QUERY = 4
CONSENSUS_POSITIVE_MIN = 3
JUDGED_WEIGHT = 5.0
AUGMENTED_WEIGHT = 1.0
MAX_TREE_DEPTH = 5


class Judgment(str, enum.Enum):
    CHAT = "CHAT"
    TASK = "TASK"
    INFORMATION = "INFORMATION"
    JUNK = "JUNK"


@dataclass(frozen=True)
class JudgedQuery:
    query: RawQuery
    judgments: tuple[Judgment, ...]

    def __post_init__(self) -> None:
        if len(self.judgments) != JUDGES_PER_QUERY:
            raise ValueError(f"expected exactly {JUDGES_PER_QUERY} judgments")


@dataclass(frozen=True)
class TrainingExample:
    query: RawQuery
    label: int  # 1 chat, 0 not chat
    weight: float
    source: str  # "judged" | "augmented"


def consensus_label(judged: JudgedQuery) -> int | None:
    """Majority rule: >=3 CHAT is positive, exactly 2 is discarded, else negative."""
    chat_votes = sum(1 for j in judged.judgments if j is Judgment.CHAT)
    if chat_votes >= CONSENSUS_POSITIVE_MIN:
        return 1
    if chat_votes == 2:
        return None
    return 0


def build_training_set(
    judged: Iterable[JudgedQuery],
    augmented_positives: Iterable[RawQuery] = (),
    augmented_negatives: Iterable[RawQuery] = (),
) -> list[TrainingExample]:
    """Assemble weighted examples; split-vote judged queries are dropped."""
    out: list[TrainingExample] = []
    for jq in judged:
        label = consensus_label(jq)
        if label is None:
            continue
        out.append(TrainingExample(jq.query, label, JUDGED_WEIGHT, "judged"))
    for q in augmented_positives:
        out.append(TrainingExample(q, 1, AUGMENTED_WEIGHT, "augmented"))
    for q in augmented_negatives:
        out.append(TrainingExample(q, 0, AUGMENTED_WEIGHT, "augmented"))
    return out


# -- linear SVM over sparse lexical features ---------------------------------


def svm_objective(
    X: sparse.csr_matrix,
    y: np.ndarray,
    sample_weight: np.ndarray,
    w: np.ndarray,
    b: float,
    l2: float,
) -> float:
    """Weighted hinge loss plus L2; the quantity the trainer descends."""
    margins = X @ w + b
    hinge = np.maximum(0.0, 1.0 - y * margins)
    total = float(sample_weight.sum())
    return 0.5 * l2 * float(w @ w) + float((sample_weight * hinge).sum()) / total


def _train_svm(
    X: sparse.csr_matrix,
    y: np.ndarray,
    sample_weight: np.ndarray,
    l2: float,
    epochs: int,
    learning_rate: float,
) -> tuple[np.ndarray, float]:
    n, d = X.shape
    w = np.zeros(d)
    b = 0.0
    total = float(sample_weight.sum())
    ys = y * sample_weight / total
    for t in range(epochs):
        lr = learning_rate / (1.0 + 0.05 * t)
        margins = X @ w + b
        viol = (y * margins) < 1.0
        grad_w = l2 * w
        if viol.any():
            grad_w = grad_w - X[viol].T @ ys[viol]
            grad_b = -float(ys[viol].sum())
        else:
            grad_b = 0.0
        w = w - lr * grad_w
        b = b - lr * grad_b
    return w, b


# -- shallow decision tree combiner -------------------------------------------


def _gini(pos: float, total: float) -> float:
    if total <= 0.0:
        return 0.0
    p = pos / total
    return 2.0 * p * (1.0 - p)


def _fit_tree_node(
    X: np.ndarray, y: np.ndarray, s: np.ndarray, depth: int, max_depth: int
) -> dict:
    total = float(s.sum())
    pos = float(s[y == 1].sum())
    leaf = {"probability": pos / total if total > 0 else 0.5}
    if depth >= max_depth or total <= 0.0 or pos == 0.0 or pos == total:
        return leaf
    parent_impurity = _gini(pos, total) * total
    best = None
    for f in range(X.shape[1]):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        ws = s[order]
        ps = ws * (y[order] == 1)
        cw = np.cumsum(ws)
        cp = np.cumsum(ps)
        for i in range(len(xs) - 1):
            if xs[i] == xs[i + 1]:
                continue
            wl, pl = float(cw[i]), float(cp[i])
            wr, pr = total - wl, pos - pl
            decrease = parent_impurity - (_gini(pl, wl) * wl + _gini(pr, wr) * wr)
            threshold = 0.5 * (xs[i] + xs[i + 1])
            if best is None or decrease > best[0] + 1e-15:
                best = (decrease, f, threshold, i)
    if best is None or best[0] <= 1e-12:
        return leaf
    _, f, threshold, _ = best
    mask = X[:, f] <= threshold
    return {
        "feature": int(f),
        "threshold": float(threshold),
        "left": _fit_tree_node(X[mask], y[mask], s[mask], depth + 1, max_depth),
        "right": _fit_tree_node(X[~mask], y[~mask], s[~mask], depth + 1, max_depth),
    }


def fit_tree(
    X: np.ndarray, y: np.ndarray, sample_weight: np.ndarray, max_depth: int = MAX_TREE_DEPTH
) -> dict:
    X = np.asarray(X, dtype=np.float64)
    return _fit_tree_node(X, np.asarray(y), np.asarray(sample_weight, dtype=np.float64), 0, max_depth)


def tree_predict(node: Mapping, x: Sequence[float]) -> float:
    while "probability" not in node:
        node = node["left"] if x[node["feature"]] <= node["threshold"] else node["right"]
    return float(node["probability"])


def tree_depth(node: Mapping) -> int:
    if "probability" in node:
        return 0
    return 1 + max(tree_depth(node["left"]), tree_depth(node["right"]))


# -- model ---------------------------------------------------------------------


@dataclass(frozen=True)
class ChatDomainTrainConfig:
    seed: int = 0
    features: NgramConfig = field(default_factory=NgramConfig)
    provider_spec: str = "hash:300"
    svm_l2: float = 1e-4
    svm_epochs: int = 300
    svm_learning_rate: float = 2.0
    mlp_hidden: int = 64
    mlp_epochs: int = 40
    mlp_batch_size: int = 32
    mlp_learning_rate: float = 0.5
    mlp_momentum: float = 0.9
    mlp_l2: float = 1e-5
    max_tree_depth: int = MAX_TREE_DEPTH

    def __post_init__(self) -> None:
        if not (1 <= self.max_tree_depth <= MAX_TREE_DEPTH):
            raise ValueError(f"tree depth must stay within 1..{MAX_TREE_DEPTH}")

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "features": self.features.to_dict(),
            "provider_spec": self.provider_spec,
            "svm_l2": self.svm_l2,
            "svm_epochs": self.svm_epochs,
            "svm_learning_rate": self.svm_learning_rate,
            "mlp_hidden": self.mlp_hidden,
            "mlp_epochs": self.mlp_epochs,
            "mlp_batch_size": self.mlp_batch_size,
            "mlp_learning_rate": self.mlp_learning_rate,
            "mlp_momentum": self.mlp_momentum,
            "mlp_l2": self.mlp_l2,
            "max_tree_depth": self.max_tree_depth,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ChatDomainTrainConfig":
        d = dict(d)
        d["features"] = NgramConfig.from_dict(d.get("features", {}))
        return cls(**d)


@dataclass(frozen=True)
class ChatDomainScore:
    lexical_score: float
    semantic_score: float
    probability: float


@dataclass(frozen=True)
class ChatDomainModel:
    stopwords: frozenset[str]
    idf: IdfTable
    svm_weights: Mapping[str, float]
    svm_bias: float
    mlp: FeedForward
    tree: Mapping
    config: ChatDomainTrainConfig

    def lexical_features(self, nq: NormalizedQuery) -> SparseFeatureVector:
        return vectorize(extract_ngrams(nq, self.config.features), self.idf)


def _canonical_examples(examples: Sequence[TrainingExample], stopwords: frozenset[str]):
    """Sort so training order does not depend on caller order."""
    normalized = [normalize(ex.query, stopwords) for ex in examples]
    order = sorted(
        range(len(examples)),
        key=lambda i: (examples[i].label, normalized[i].text, examples[i].source, examples[i].weight),
    )
    return [examples[i] for i in order], [normalized[i] for i in order]


def _lexical_matrix(
    vectors: Sequence[SparseFeatureVector], vocab: Mapping[str, int]
) -> sparse.csr_matrix:
    rows, cols, vals = [], [], []
    for r, vec in enumerate(vectors):
        for fid, v in vec.entries.items():
            c = vocab.get(fid)
            if c is not None:
                rows.append(r)
                cols.append(c)
                vals.append(v)
    return sparse.csr_matrix((vals, (rows, cols)), shape=(len(vectors), len(vocab)))


def train(
    examples: Sequence[TrainingExample],
    config: ChatDomainTrainConfig | None = None,
    stopwords: frozenset[str] | None = None,
    provider: EmbeddingProvider | None = None,
) -> ChatDomainModel:
    """Fit the full ensemble; deterministic given config.seed."""
    config = config or ChatDomainTrainConfig()
    stopwords = stopwords if stopwords is not None else load_stopwords()
    provider = provider or provider_from_spec(config.provider_spec)
    if not examples:
        raise ValueError("no training examples")
    labels_present = {ex.label for ex in examples}
    if labels_present != {0, 1}:
        raise ValueError("training requires both chat and non-chat examples")

    examples, normalized = _canonical_examples(examples, stopwords)
    y01 = np.array([ex.label for ex in examples], dtype=np.float64)
    ypm = np.where(y01 == 1.0, 1.0, -1.0)
    s = np.array([ex.weight for ex in examples], dtype=np.float64)

    idf = fit_idf(normalized, config.features)
    lex_vectors = [vectorize(extract_ngrams(nq, config.features), idf) for nq in normalized]
    vocab_features = sorted({fid for vec in lex_vectors for fid in vec.entries})
    vocab = {fid: i for i, fid in enumerate(vocab_features)}
    X_lex = _lexical_matrix(lex_vectors, vocab)
    X_sem = np.vstack([provider.embed(nq) for nq in normalized])

    # Out-of-fold scores for the combiner: stratified 2-fold by class order.
    fold = np.zeros(len(examples), dtype=np.int64)
    for label in (0, 1):
        idx = np.flatnonzero(y01 == label)
        fold[idx[1::2]] = 1
    oof = np.zeros((len(examples), 2), dtype=np.float64)
    for k in (0, 1):
        tr = fold != k
        te = fold == k
        if not te.any() or len({int(v) for v in y01[tr]}) < 2:
            continue
        w_k, b_k = _train_svm(
            X_lex[tr], ypm[tr], s[tr], config.svm_l2, config.svm_epochs, config.svm_learning_rate
        )
        net_k = FeedForward.init((provider.dim, config.mlp_hidden, 1), "logistic", config.seed + k)
        net_k.train(
            X_sem[tr],
            y01[tr],
            s[tr],
            SgdConfig(
                epochs=config.mlp_epochs,
                batch_size=config.mlp_batch_size,
                learning_rate=config.mlp_learning_rate,
                momentum=config.mlp_momentum,
                l2=config.mlp_l2,
                seed=config.seed + k,
            ),
        )
        oof[te, 0] = X_lex[te] @ w_k + b_k
        oof[te, 1] = net_k.forward(X_sem[te])[:, 0]
    tree = fit_tree(oof, y01.astype(np.int64), s, config.max_tree_depth)

    w_full, b_full = _train_svm(
        X_lex, ypm, s, config.svm_l2, config.svm_epochs, config.svm_learning_rate
    )
    net = FeedForward.init((provider.dim, config.mlp_hidden, 1), "logistic", config.seed)
    net.train(
        X_sem,
        y01,
        s,
        SgdConfig(
            epochs=config.mlp_epochs,
            batch_size=config.mlp_batch_size,
            learning_rate=config.mlp_learning_rate,
            momentum=config.mlp_momentum,
            l2=config.mlp_l2,
            seed=config.seed,
        ),
    )
    svm_weights = {fid: float(w_full[i]) for fid, i in vocab.items() if w_full[i] != 0.0}
    return ChatDomainModel(
        stopwords=stopwords,
        idf=idf,
        svm_weights=svm_weights,
        svm_bias=float(b_full),
        mlp=net,
        tree=tree,
        config=config,
    )


def score(
    query: RawQuery | str, model: ChatDomainModel, provider: EmbeddingProvider | None = None
) -> ChatDomainScore:
    provider = provider or provider_from_spec(model.config.provider_spec)
    nq = normalize(query, model.stopwords)
    feats = model.lexical_features(nq)
    lexical = model.svm_bias + math.fsum(
        model.svm_weights.get(fid, 0.0) * v for fid, v in feats.entries.items()
    )
    semantic = float(model.mlp.forward(provider.embed(nq))[0, 0])
    probability = tree_predict(model.tree, (lexical, semantic))
    return ChatDomainScore(lexical, semantic, probability)


def interpret(model: ChatDomainModel, feature_id: str) -> float:
    """Weight the lexical model assigns a feature; 0.0 when absent."""
    return float(model.svm_weights.get(feature_id, 0.0))


def override_weight(model: ChatDomainModel, feature_id: str, weight: float) -> ChatDomainModel:
    """Return a copy with one lexical weight pinned to an operator-chosen value."""
    weights = dict(model.svm_weights)
    if weight == 0.0:
        weights.pop(feature_id, None)
    else:
        weights[feature_id] = float(weight)
    return replace(model, svm_weights=weights)


# -- persistence ----------------------------------------------------------------

_KIND = "chat-domain-model"


def save_model(model: ChatDomainModel, path: str) -> None:
    svm_features = sorted(model.svm_weights)
    idf_features, idf_counts, doc_count = model.idf.to_parts()
    meta = {
        "config": model.config.to_dict(),
        "stopwords": sorted(model.stopwords),
        "svm_features": svm_features,
        "svm_bias": model.svm_bias,
        "idf_features": idf_features,
        "document_count": doc_count,
        "tree": dict(model.tree),
        "mlp_sizes": list(model.mlp.sizes),
    }
    arrays = {
        "svm_weights": np.array([model.svm_weights[f] for f in svm_features], dtype=np.float64),
        "idf_df": np.array(idf_counts, dtype=np.int64),
    }
    arrays.update(model.mlp.to_arrays("mlp_"))
    serialization.write_container(path, _KIND, meta, arrays)


def load_model(path: str) -> ChatDomainModel:
    meta, arrays = serialization.read_container(path, _KIND)
    config = ChatDomainTrainConfig.from_dict(meta["config"])
    idf = IdfTable.from_parts(
        meta["idf_features"], [int(c) for c in arrays["idf_df"]], int(meta["document_count"])
    )
    svm_weights = {
        f: float(v) for f, v in zip(meta["svm_features"], arrays["svm_weights"])
    }
    mlp = FeedForward.from_arrays(tuple(meta["mlp_sizes"]), "logistic", arrays, "mlp_")
    return ChatDomainModel(
        stopwords=frozenset(meta["stopwords"]),
        idf=idf,
        svm_weights=svm_weights,
        svm_bias=float(meta["svm_bias"]),
        mlp=mlp,
        tree=meta["tree"],
        config=config,
    )
