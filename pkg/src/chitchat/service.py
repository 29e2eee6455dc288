"""HTTP surface over the pipeline plus the annotation review workflow.

The app holds one immutable PipelineBundle at a time.  Requests read
whatever bundle is current; applying an annotation batch builds a fresh
bundle from the new store snapshot and swaps it in with a single
attribute assignment, so no request ever sees a half-loaded store.

Annotation decisions arrive one at a time while reviewers work through a
batch, so each accepted decision is persisted immediately next to the
batch file.  A second decision for a cluster is accepted only when it
repeats the first exactly; anything else is a conflict.
"""
from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, field, replace
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import serialization
from .intent_mining import AnnotationBatch, AnnotationDecision
from .intent_store import IntentStore, commit_annotations
from .moderation import ModerationConfig
from .pipeline import RESPONSE_SCHEMA_VERSION, PipelineBundle
from .specific_intent import SpecificIntentMatcher

MAX_TEXT_BYTES = 8192

_ENV_PREFIX = "CHITCHAT_"


@dataclass(frozen=True)
class ServiceConfig:
    """Service settings from a JSON file with environment overrides.

    Every key is optional; a config with no models starts a service that
    answers health checks with 503 until models are supplied.  Environment
    variables win over the file: CHITCHAT_HOST, CHITCHAT_PORT,
    CHITCHAT_STORE, CHITCHAT_DOMAIN_MODEL, CHITCHAT_GENERIC_MODEL,
    CHITCHAT_RULES, CHITCHAT_BATCHES, CHITCHAT_CORS_ORIGINS (comma
    separated), CHITCHAT_MODERATION_ENDPOINT and
    CHITCHAT_MODERATION_CREDENTIAL_ENV.
    """

    host: str = "127.0.0.1"
    port: int = 8420
    store: str | None = None
    domain_model: str | None = None
    generic_model: str | None = None
    rules: str | None = None
    batches: str | None = None
    cors_origins: tuple[str, ...] = ()
    fuzzy_threshold: float | None = None
    moderation: ModerationConfig = field(default_factory=ModerationConfig)

    @classmethod
    def load(cls, path: str | Path | None = None, env: dict | None = None) -> "ServiceConfig":
        env = os.environ if env is None else env
        doc: dict = {}
        if path is not None:
            doc = json.loads(Path(path).read_text("utf-8"))
            if not isinstance(doc, dict):
                raise ValueError(f"{path}: service config must be a JSON object")
        known = {
            "host",
            "port",
            "store",
            "domain_model",
            "generic_model",
            "rules",
            "batches",
            "cors_origins",
            "fuzzy_threshold",
            "moderation",
        }
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ValueError(f"{path}: unknown service config fields: {unknown}")

        def pick(key: str, default):
            return env.get(_ENV_PREFIX + key.upper(), doc.get(key, default))

        mod_doc = dict(doc.get("moderation") or {})
        if _ENV_PREFIX + "MODERATION_ENDPOINT" in env:
            mod_doc["endpoint"] = env[_ENV_PREFIX + "MODERATION_ENDPOINT"]
        if _ENV_PREFIX + "MODERATION_CREDENTIAL_ENV" in env:
            mod_doc["credential_env"] = env[_ENV_PREFIX + "MODERATION_CREDENTIAL_ENV"]
        origins = pick("cors_origins", ())
        if isinstance(origins, str):
            origins = [o.strip() for o in origins.split(",") if o.strip()]
        fuzzy = doc.get("fuzzy_threshold")
        return cls(
            host=str(pick("host", cls.host)),
            port=int(pick("port", cls.port)),
            store=pick("store", None),
            domain_model=pick("domain_model", None),
            generic_model=pick("generic_model", None),
            rules=pick("rules", None),
            batches=pick("batches", None),
            cors_origins=tuple(origins),
            fuzzy_threshold=None if fuzzy is None else float(fuzzy),
            moderation=ModerationConfig(**mod_doc),
        )


def build_bundle(config: ServiceConfig) -> PipelineBundle:
    """Assemble the pipeline a config describes; shared with the CLI."""
    store = config.store
    # A configured but still empty store is normal before the first
    # annotation batch is applied; serve without a matcher until then.
    if store is not None and IntentStore(store).latest_version() is None:
        store = None
    return PipelineBundle.from_paths(
        domain_model=config.domain_model,
        generic_model=config.generic_model,
        store=store,
        rules=config.rules,
        moderation=config.moderation,
        fuzzy_threshold=config.fuzzy_threshold,
    )


class ServiceState:
    """Mutable holder for the current bundle and the annotation workflow."""

    def __init__(self, config: ServiceConfig):
        self.config = config
        self.write_lock = threading.Lock()
        self.bundle = build_bundle(config)

    def swap_snapshot(self, version: int) -> None:
        snapshot = IntentStore(self.config.store).load(version)
        kwargs = {}
        if self.config.fuzzy_threshold is not None:
            kwargs["fuzzy_threshold"] = self.config.fuzzy_threshold
        matcher = SpecificIntentMatcher(snapshot.intents, snapshot.pattern_lists, **kwargs)
        meta = {i.id: (i.friendly_name, i.kind) for i in snapshot.intents}
        self.bundle = replace(
            self.bundle, matcher=matcher, intent_meta=meta, store_version=snapshot.version
        )

    # -- annotation batches on disk ------------------------------------------

    def batch_paths(self) -> list[Path]:
        if self.config.batches is None:
            return []
        root = Path(self.config.batches)
        if not root.is_dir():
            return []
        return sorted(root.glob("*.batch.doc"))

    def load_batches(self) -> dict[str, AnnotationBatch]:
        out: dict[str, AnnotationBatch] = {}
        for path in self.batch_paths():
            batch = AnnotationBatch.load(path)
            out.setdefault(batch.id, batch)
        return out

    def find_batch(self, batch_id: str) -> AnnotationBatch:
        batch = self.load_batches().get(batch_id)
        if batch is None:
            raise HTTPException(404, f"unknown annotation batch {batch_id!r}")
        return batch

    def _decisions_path(self, batch_id: str) -> Path:
        return Path(self.config.batches) / f"{batch_id}.decisions.doc"

    def read_decisions(self, batch_id: str) -> dict:
        path = self._decisions_path(batch_id)
        if not path.exists():
            return {"schema_version": 1, "batch_id": batch_id, "decisions": [], "applied_version": None}
        return json.loads(path.read_text("utf-8"))

    def write_decisions(self, batch_id: str, doc: dict) -> None:
        serialization.atomic_write_text(
            self._decisions_path(batch_id), json.dumps(doc, indent=2, sort_keys=True) + "\n"
        )


class UnderstandBody(BaseModel):
    text: str
    trace: bool = False


class DecisionBody(BaseModel):
    cluster_id: int
    action: str
    intent_name: str | None = None
    reason: str | None = None
    merge_target: int | None = None


def create_app(config: ServiceConfig | None = None) -> FastAPI:
    state = ServiceState(config or ServiceConfig())
    app = FastAPI(title="chitchat", version=str(RESPONSE_SCHEMA_VERSION))
    app.state.service = state
    if state.config.cors_origins:
        app.add_middleware(
            CORSMiddleware,
            allow_origins=list(state.config.cors_origins),
            allow_methods=["*"],
            allow_headers=["*"],
        )

    @app.get("/v1/health")
    def health():
        if not state.bundle.loaded():
            return JSONResponse({"status": "loading"}, status_code=503)
        return {"status": "ok"}

    @app.get("/v1/version")
    def version():
        return {
            "schema_version": RESPONSE_SCHEMA_VERSION,
            "store_version": state.bundle.store_version,
            "intent_count": len(state.bundle.intent_meta),
        }

    @app.post("/v1/understand")
    def understand(body: UnderstandBody):
        bundle = state.bundle
        if not bundle.loaded():
            raise HTTPException(503, "models not loaded")
        if len(body.text.encode("utf-8")) > MAX_TEXT_BYTES:
            raise HTTPException(400, f"query text exceeds {MAX_TEXT_BYTES} bytes")
        try:
            return bundle.understand(body.text, trace=body.trace)
        except ValueError as e:
            raise HTTPException(400, str(e)) from None

    @app.get("/v1/annotation/batches")
    def list_batches():
        out = []
        for batch_id, batch in sorted(state.load_batches().items()):
            doc = state.read_decisions(batch_id)
            out.append(
                {
                    "id": batch_id,
                    "mode": batch.mode,
                    "epsilon": batch.epsilon,
                    "min_points": batch.min_points,
                    "cluster_count": len(batch.clusters),
                    "decided_count": len(doc["decisions"]),
                    "applied_version": doc["applied_version"],
                }
            )
        return {"batches": out}

    @app.get("/v1/annotation/batches/{batch_id}")
    def get_batch(batch_id: str):
        batch = state.find_batch(batch_id)
        doc = state.read_decisions(batch_id)
        body = batch.to_json()
        body["decisions"] = doc["decisions"]
        body["applied_version"] = doc["applied_version"]
        return body

    @app.post("/v1/annotation/batches/{batch_id}/decisions")
    def post_decision(batch_id: str, body: DecisionBody):
        batch = state.find_batch(batch_id)
        try:
            decision = AnnotationDecision(
                cluster_id=body.cluster_id,
                action=body.action,
                intent_name=body.intent_name,
                reason=body.reason,
                merge_target=body.merge_target,
            )
        except ValueError as e:
            raise HTTPException(422, str(e)) from None
        known = set(batch.cluster_ids())
        if decision.cluster_id not in known:
            raise HTTPException(422, f"cluster {decision.cluster_id} is not in batch {batch_id!r}")
        if decision.merge_target is not None and decision.merge_target not in known:
            raise HTTPException(
                422, f"merge target {decision.merge_target} is not in batch {batch_id!r}"
            )
        with state.write_lock:
            doc = state.read_decisions(batch_id)
            by_cluster = {d["cluster_id"]: d for d in doc["decisions"]}
            recorded = decision.to_json()
            existing = by_cluster.get(decision.cluster_id)
            if existing is not None:
                if existing == recorded:
                    return {"status": "unchanged", "decided_count": len(doc["decisions"])}
                raise HTTPException(
                    409, f"cluster {decision.cluster_id} already has a conflicting decision"
                )
            if decision.action == "merge":
                target = by_cluster.get(decision.merge_target)
                if target is not None and target["action"] == "reject":
                    raise HTTPException(
                        422, f"merge target {decision.merge_target} is a rejected cluster"
                    )
            doc["decisions"].append(recorded)
            state.write_decisions(batch_id, doc)
            return {"status": "recorded", "decided_count": len(doc["decisions"])}

    @app.post("/v1/annotation/batches/{batch_id}/apply")
    def apply_batch(batch_id: str):
        batch = state.find_batch(batch_id)
        if state.config.store is None:
            raise HTTPException(503, "no intent store configured")
        with state.write_lock:
            doc = state.read_decisions(batch_id)
            if doc["applied_version"] is not None:
                raise HTTPException(
                    409, f"batch {batch_id!r} was already applied as version {doc['applied_version']}"
                )
            undecided = sorted(set(batch.cluster_ids()) - {d["cluster_id"] for d in doc["decisions"]})
            if undecided:
                raise HTTPException(422, {"message": "batch has undecided clusters", "undecided": undecided})
            decisions = [AnnotationDecision.from_json(d) for d in doc["decisions"]]
            bundle = state.bundle
            try:
                version, new_intents = commit_annotations(
                    IntentStore(state.config.store),
                    batch,
                    decisions,
                    provider=bundle.semantic,
                    stopwords=bundle.stopwords,
                )
            except ValueError as e:
                raise HTTPException(422, str(e)) from None
            state.swap_snapshot(version)
            doc["applied_version"] = version
            state.write_decisions(batch_id, doc)
            return {
                "store_version": version,
                "intents_added": len(new_intents),
                "intent_count": len(state.bundle.intent_meta),
            }

    return app


def run(config: ServiceConfig) -> None:
    """Serve until interrupted; import here keeps app creation test-friendly."""
    import uvicorn

    uvicorn.run(create_app(config), host=config.host, port=config.port, log_level="warning")
