"""Density clustering of chat queries and annotation batch handling.

DBSCAN over cosine distance groups repeated phrasings of the same intent;
clusters are ranked by how much autogenerated-answer traffic they would
cover and exported for human review.  Reviewer decisions (choose, reject
with a reason, merge into a chosen cluster) turn clusters into intent
definitions.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Literal, Mapping, Sequence

import numpy as np

from . import serialization
from .embeddings import EmbeddingProvider, default_semantic_provider, ensure_embedding
from .specific_intent import IntentDefinition
from .text_pipeline import NormalizedQuery, RawQuery, normalize

EMBEDDING_DIM = 300

SPECIFIC_DEFAULTS = {"epsilon": 0.2, "min_points": 100, "top_k": 300}
GENERIC_DEFAULTS = {"epsilon": 0.4, "min_points": 1000, "top_k": 150}

_NO_STOPWORDS: frozenset[str] = frozenset()


@dataclass(frozen=True)
class MiningConfig:
    mode: Literal["specific", "generic"]
    epsilon: float
    min_points: int
    top_k: int

    def __post_init__(self) -> None:
        if self.mode not in ("specific", "generic"):
            raise ValueError(f"unknown mining mode {self.mode!r}")
        if not (0.0 < self.epsilon < 1.0):
            raise ValueError("epsilon must lie in (0, 1)")
        if self.min_points < 1 or self.top_k < 1:
            raise ValueError("min_points and top_k must be positive")

    @classmethod
    def for_mode(cls, mode: str, **overrides) -> "MiningConfig":
        defaults = SPECIFIC_DEFAULTS if mode == "specific" else GENERIC_DEFAULTS
        params = {**defaults, **{k: v for k, v in overrides.items() if v is not None}}
        return cls(mode=mode, **params)


@dataclass(frozen=True)
class ClusterMember:
    query: RawQuery
    distance_to_centroid: float
    weight: float


@dataclass
class Cluster:
    id: int
    members: list[ClusterMember]
    centroid: np.ndarray
    dc_min: float | None = None
    effectiveness: float | None = None


def _dedupe(queries: Sequence[tuple[RawQuery, np.ndarray]]):
    """Collapse duplicate normalized texts, summing weights.

    Returns (texts, representative queries, unit embeddings) sorted by
    normalized text, which fixes cluster numbering.
    """
    groups: dict[str, list[int]] = {}
    normalized: list[str] = []
    for i, (raw, emb) in enumerate(queries):
        ensure_embedding(emb, EMBEDDING_DIM)
        if float(np.linalg.norm(emb)) == 0.0:
            raise ValueError(f"zero embedding for query {raw.text!r}")
        text = normalize(raw, _NO_STOPWORDS).text
        normalized.append(text)
        groups.setdefault(text, []).append(i)
    texts = sorted(groups)
    reps: list[RawQuery] = []
    units = np.zeros((len(texts), EMBEDDING_DIM), dtype=np.float64)
    for row, text in enumerate(texts):
        idxs = groups[text]
        first = min(idxs, key=lambda i: queries[i][0].text)
        raw, emb = queries[first]
        weight = math.fsum(queries[i][0].weight for i in idxs)
        reps.append(RawQuery(text=raw.text, weight=weight, id=raw.id))
        arr = np.asarray(emb, dtype=np.float64)
        units[row] = arr / float(np.linalg.norm(arr))
    return texts, reps, units


def cluster(queries: Sequence[tuple[RawQuery, np.ndarray]], config: MiningConfig) -> list[Cluster]:
    """DBSCAN with distance = 1 - cosine; min_points counts distinct texts.

    Clusters are numbered in discovery order over queries sorted by
    normalized text; border points go to the first (lowest-id) cluster
    that reaches them; noise is dropped.
    """
    if not queries:
        return []
    _, reps, units = _dedupe(queries)
    n = len(reps)
    dists = np.clip(1.0 - units @ units.T, 0.0, 2.0)
    neighbor_lists = [np.flatnonzero(dists[i] <= config.epsilon) for i in range(n)]
    core = np.array([len(nb) >= config.min_points for nb in neighbor_lists])

    assignment = np.full(n, -1, dtype=np.int64)
    next_id = 0
    for start in range(n):
        if assignment[start] != -1 or not core[start]:
            continue
        cid = next_id
        next_id += 1
        assignment[start] = cid
        frontier = [start]
        while frontier:
            point = frontier.pop(0)
            if not core[point]:
                continue
            for nb in neighbor_lists[point]:
                if assignment[nb] == -1:
                    assignment[nb] = cid
                    frontier.append(int(nb))

    clusters: list[Cluster] = []
    for cid in range(next_id):
        rows = np.flatnonzero(assignment == cid)
        centroid = units[rows].mean(axis=0)
        norm = float(np.linalg.norm(centroid))
        if norm > 0.0:
            centroid = centroid / norm
        sims = units[rows] @ centroid
        members = [
            ClusterMember(
                query=reps[int(r)],
                distance_to_centroid=float(np.clip(1.0 - sims[j], 0.0, 2.0)),
                weight=reps[int(r)].weight,
            )
            for j, r in enumerate(rows)
        ]
        clusters.append(Cluster(id=cid, members=members, centroid=centroid))

    if len(clusters) >= 2:
        centroids = np.vstack([c.centroid for c in clusters])
        sims = centroids @ centroids.T
        np.fill_diagonal(sims, -np.inf)
        for i, c in enumerate(clusters):
            c.dc_min = float(np.clip(1.0 - sims[i].max(), 0.0, 2.0))
    return clusters


def effectiveness_specific(c: Cluster) -> float:
    """Traffic a cluster would cover: sum of (1 - D_i) * W_i."""
    return math.fsum((1.0 - m.distance_to_centroid) * m.weight for m in c.members)


def effectiveness_generic(c: Cluster, all_centroids: Sequence[np.ndarray]) -> float:
    """Coverage dampened by isolation: DC_min^2 * sum of (1 - D_i) * W_i.

    DC_min is the cosine distance to the nearest other centroid; clusters
    that sit next to a neighbour are poor class candidates.
    """
    others = [o for o in all_centroids if o is not c.centroid and not np.array_equal(o, c.centroid)]
    if not others:
        raise ValueError("generic effectiveness requires at least two clusters")
    dc_min = min(float(np.clip(1.0 - cos, 0.0, 2.0)) for cos in (np.dot(c.centroid, o) for o in others))
    return dc_min * dc_min * effectiveness_specific(c)


MAX_SAMPLES_PER_CLUSTER = 25


@dataclass(frozen=True)
class BatchCluster:
    id: int
    effectiveness: float
    total_weight: float
    members: tuple[tuple[str, float, float], ...]  # (text, weight, distance)
    samples: tuple[tuple[str, float, float], ...]


@dataclass(frozen=True)
class AnnotationBatch:
    id: str
    mode: Literal["specific", "generic"]
    epsilon: float
    min_points: int
    clusters: tuple[BatchCluster, ...]

    def cluster_ids(self) -> list[int]:
        return [c.id for c in self.clusters]

    def to_json(self) -> dict:
        return {
            "schema_version": 1,
            "id": self.id,
            "mode": self.mode,
            "epsilon": self.epsilon,
            "min_points": self.min_points,
            "clusters": [
                {
                    "id": c.id,
                    "effectiveness": c.effectiveness,
                    "size": len(c.members),
                    "total_weight": c.total_weight,
                    "members": [list(m) for m in c.members],
                    "samples": [list(s) for s in c.samples],
                }
                for c in self.clusters
            ],
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "AnnotationBatch":
        if doc.get("schema_version") != 1:
            raise ValueError("unsupported annotation batch schema version")
        clusters = tuple(
            BatchCluster(
                id=int(c["id"]),
                effectiveness=float(c["effectiveness"]),
                total_weight=float(c["total_weight"]),
                members=tuple((str(t), float(w), float(d)) for t, w, d in c["members"]),
                samples=tuple((str(t), float(w), float(d)) for t, w, d in c["samples"]),
            )
            for c in doc["clusters"]
        )
        return cls(
            id=str(doc["id"]),
            mode=doc["mode"],
            epsilon=float(doc["epsilon"]),
            min_points=int(doc["min_points"]),
            clusters=clusters,
        )

    def save(self, path: str | Path) -> None:
        serialization.atomic_write_text(
            path, json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"
        )

    @classmethod
    def load(cls, path: str | Path) -> "AnnotationBatch":
        return cls.from_json(json.loads(Path(path).read_text("utf-8")))


def rank_and_export(clusters: Sequence[Cluster], config: MiningConfig) -> AnnotationBatch:
    """Score, rank and truncate clusters into a reviewable batch."""
    if config.mode == "generic" and len(clusters) >= 2:
        centroids = [c.centroid for c in clusters]
        scored = [(effectiveness_generic(c, centroids), c) for c in clusters]
    else:
        scored = [(effectiveness_specific(c), c) for c in clusters]
    ranked = sorted(scored, key=lambda sc: (-sc[0], sc[1].id))[: config.top_k]
    batch_clusters = []
    for eff, c in ranked:
        members = tuple(
            (m.query.text, m.weight, m.distance_to_centroid)
            for m in sorted(c.members, key=lambda m: (m.distance_to_centroid, m.query.text))
        )
        batch_clusters.append(
            BatchCluster(
                id=c.id,
                effectiveness=eff,
                total_weight=math.fsum(m.weight for m in c.members),
                members=members,
                samples=members[:MAX_SAMPLES_PER_CLUSTER],
            )
        )
    digest = hashlib.sha256(
        serialization.canonical_json(
            [[bc.id, bc.effectiveness, [list(m) for m in bc.members]] for bc in batch_clusters]
        ).encode("utf-8")
    ).hexdigest()[:12]
    return AnnotationBatch(
        id=f"{config.mode}-{digest}",
        mode=config.mode,
        epsilon=config.epsilon,
        min_points=config.min_points,
        clusters=tuple(batch_clusters),
    )


# -- annotation decisions --------------------------------------------------------


@dataclass(frozen=True)
class AnnotationDecision:
    cluster_id: int
    action: Literal["choose", "reject", "merge"]
    intent_name: str | None = None
    reason: str | None = None
    merge_target: int | None = None

    def __post_init__(self) -> None:
        if self.action == "choose":
            if not self.intent_name or not self.intent_name.strip():
                raise ValueError("choose requires a non-empty intent name")
        elif self.action == "reject":
            if not self.reason or not self.reason.strip():
                raise ValueError("reject requires a non-empty reason")
        elif self.action == "merge":
            if self.merge_target is None:
                raise ValueError("merge requires a target cluster id")
            if self.merge_target == self.cluster_id:
                raise ValueError("a cluster cannot merge into itself")
        else:
            raise ValueError(f"unknown annotation action {self.action!r}")

    def to_json(self) -> dict:
        doc: dict = {"cluster_id": self.cluster_id, "action": self.action}
        if self.intent_name is not None:
            doc["intent_name"] = self.intent_name
        if self.reason is not None:
            doc["reason"] = self.reason
        if self.merge_target is not None:
            doc["merge_target"] = self.merge_target
        return doc

    @classmethod
    def from_json(cls, doc: Mapping) -> "AnnotationDecision":
        return cls(
            cluster_id=int(doc["cluster_id"]),
            action=doc["action"],
            intent_name=doc.get("intent_name"),
            reason=doc.get("reason"),
            merge_target=doc.get("merge_target"),
        )


@dataclass(frozen=True)
class AnnotationAudit:
    batch_id: str
    chosen: tuple[tuple[int, str], ...]  # (cluster id, intent id)
    merged: tuple[tuple[int, int], ...]  # (cluster id, target cluster id)
    rejected: tuple[tuple[int, str], ...]  # (cluster id, reason)

    def to_json(self) -> dict:
        return {
            "batch_id": self.batch_id,
            "chosen": [list(x) for x in self.chosen],
            "merged": [list(x) for x in self.merged],
            "rejected": [list(x) for x in self.rejected],
        }


def slugify_intent_name(name: str) -> str:
    out = []
    for ch in name.strip().casefold():
        out.append(ch if ch.isalnum() else "_")
    slug = "".join(out).strip("_")
    while "__" in slug:
        slug = slug.replace("__", "_")
    if not slug:
        raise ValueError(f"intent name {name!r} reduces to an empty id")
    return slug


def apply_annotations(
    batch: AnnotationBatch,
    decisions: Sequence[AnnotationDecision],
    provider: EmbeddingProvider | None = None,
    stopwords: frozenset[str] | None = None,
) -> tuple[list[IntentDefinition], AnnotationAudit]:
    """Turn a fully-decided batch into intent definitions plus an audit trail.

    Every cluster needs exactly one decision; merges must point at chosen
    clusters.  Rejected members are dropped, their reasons retained.
    """
    provider = provider or default_semantic_provider()
    if stopwords is None:
        from .text_pipeline import load_stopwords

        stopwords = load_stopwords()
    by_cluster: dict[int, AnnotationDecision] = {}
    known = set(batch.cluster_ids())
    for d in decisions:
        if d.cluster_id not in known:
            raise ValueError(f"decision for unknown cluster {d.cluster_id}")
        if d.cluster_id in by_cluster:
            raise ValueError(f"duplicate decision for cluster {d.cluster_id}")
        by_cluster[d.cluster_id] = d
    missing = sorted(known - set(by_cluster))
    if missing:
        raise ValueError(f"missing decisions for clusters: {missing}")

    chosen = {cid for cid, d in by_cluster.items() if d.action == "choose"}
    for cid, d in by_cluster.items():
        if d.action == "merge" and d.merge_target not in chosen:
            raise ValueError(
                f"cluster {cid} merges into {d.merge_target}, which is not a chosen cluster"
            )

    names: dict[int, str] = {}
    for cid in sorted(chosen):
        slug = slugify_intent_name(by_cluster[cid].intent_name or "")
        if slug in names.values():
            raise ValueError(f"duplicate intent id {slug!r} in batch decisions")
        names[cid] = slug

    members_by_cluster = {c.id: c for c in batch.clusters}
    intents: list[IntentDefinition] = []
    merged_audit: list[tuple[int, int]] = []
    for cid in sorted(chosen):
        decision = by_cluster[cid]
        merged_from = sorted(
            c for c, d in by_cluster.items() if d.action == "merge" and d.merge_target == cid
        )
        curated: list[tuple[NormalizedQuery, np.ndarray]] = []
        seen: set[str] = set()
        for source in [cid, *merged_from]:
            for text, weight, _dist in members_by_cluster[source].members:
                nq = normalize(RawQuery(text=text, weight=weight), stopwords)
                if nq.text in seen:
                    continue
                seen.add(nq.text)
                curated.append((nq, provider.embed(nq)))
        intents.append(
            IntentDefinition(
                id=names[cid],
                friendly_name=decision.intent_name or names[cid],
                kind=batch.mode,
                curated_queries=curated,
                patterns=[],
                responses=[],
                provenance={
                    "batch_id": batch.id,
                    "cluster_id": cid,
                    "merged_from": merged_from,
                },
            )
        )
        merged_audit.extend((m, cid) for m in merged_from)

    audit = AnnotationAudit(
        batch_id=batch.id,
        chosen=tuple((cid, names[cid]) for cid in sorted(chosen)),
        merged=tuple(sorted(merged_audit)),
        rejected=tuple(
            (cid, d.reason or "")
            for cid, d in sorted(by_cluster.items())
            if d.action == "reject"
        ),
    )
    return intents, audit
