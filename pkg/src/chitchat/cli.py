"""Operator command line: thin veneers over the library modules.

Every command is seeded and reproducible: the same inputs and the same
seed write byte-identical outputs.  Failures print a one-line JSON error
to stderr and exit nonzero so scripts can parse them.
"""
from __future__ import annotations

import functools
import json
from dataclasses import replace
from pathlib import Path

import click

from . import chat_domain, generic_intent, metrics, synth
from .chat_domain import JudgedQuery, Judgment
from .embeddings import default_semantic_provider, default_sentiment_provider, provider_from_spec
from .intent_mining import AnnotationBatch, AnnotationDecision, MiningConfig, cluster, rank_and_export
from .intent_store import IntentStore, commit_annotations
from .moderation import ModerationConfig, moderate
from .service import ServiceConfig, build_bundle, run
from .text_pipeline import RawQuery, load_stopwords, normalize


def _fail(message: str) -> None:
    click.echo(json.dumps({"error": message}), err=True)
    raise SystemExit(1)


def guarded(f):
    """Turn expected failures into the machine-readable error contract."""

    @functools.wraps(f)
    def wrapper(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except KeyError as e:
            _fail(f"missing field {e}")
        except (ValueError, OSError, RuntimeError) as e:
            _fail(str(e))

    return wrapper


def _read_tsv(path: str, columns: int, what: str) -> list[tuple[int, tuple[str, ...]]]:
    rows = []
    for lineno, line in enumerate(Path(path).read_text("utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != columns:
            raise ValueError(f"{path}:{lineno}: expected {columns} tab-separated {what} fields")
        rows.append((lineno, tuple(parts)))
    return rows


def _weighted_query(path: str, lineno: int, text: str, weight: str, id: str = "") -> RawQuery:
    try:
        return RawQuery(text=text, weight=float(weight), id=id)
    except ValueError as e:
        raise ValueError(f"{path}:{lineno}: {e}") from None


def _load_domain_rows(path: str):
    judged: list[JudgedQuery] = []
    positives: list[RawQuery] = []
    negatives: list[RawQuery] = []
    for lineno, (text, weight, kind, payload) in _read_tsv(path, 4, "domain"):
        query = _weighted_query(path, lineno, text, weight)
        if kind == "judged":
            try:
                votes = tuple(Judgment(v) for v in payload.split(","))
                judged.append(JudgedQuery(query=query, judgments=votes))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: bad judgment votes {payload!r}") from None
        elif kind == "augmented":
            if payload == "positive":
                positives.append(query)
            elif payload == "negative":
                negatives.append(query)
            else:
                raise ValueError(f"{path}:{lineno}: augmented rows are positive or negative")
        else:
            raise ValueError(f"{path}:{lineno}: unknown row kind {kind!r}")
    return judged, positives, negatives


def _service_config(config_path, **overrides) -> ServiceConfig:
    cfg = ServiceConfig.load(config_path)
    changed = {k: v for k, v in overrides.items() if v is not None}
    return replace(cfg, **changed) if changed else cfg


_MODEL_OPTIONS = (
    click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                 default=None, help="service config supplying model and store paths"),
    click.option("--domain-model", type=click.Path(exists=True, dir_okay=False), default=None),
    click.option("--generic-model", type=click.Path(exists=True, dir_okay=False), default=None),
    click.option("--store", type=click.Path(file_okay=False), default=None),
    click.option("--rules", type=click.Path(exists=True, dir_okay=False), default=None),
)


def model_options(f):
    for opt in reversed(_MODEL_OPTIONS):
        f = opt(f)
    return f


@click.group()
def cli() -> None:
    """Chit-chat query understanding toolkit."""


@cli.command("train-domain")
@click.option("--data", required=True, type=click.Path(exists=True, dir_okay=False),
              help="TSV: text, weight, judged|augmented, votes or polarity")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--seed", default=0, show_default=True, type=int)
@guarded
def train_domain_cmd(data: str, out: str, seed: int) -> None:
    """Train the chat domain ensemble from judged and augmented rows."""
    judged, positives, negatives = _load_domain_rows(data)
    examples = chat_domain.build_training_set(judged, positives, negatives)
    model = chat_domain.train(examples, chat_domain.ChatDomainTrainConfig(seed=seed))
    chat_domain.save_model(model, out)
    click.echo(json.dumps({"examples": len(examples), "out": out}))


@cli.command("train-generic")
@click.option("--data", required=True, type=click.Path(exists=True, dir_okay=False),
              help="TSV: text, weight, intent id")
@click.option("--store", required=True, type=click.Path(exists=True, file_okay=False),
              help="intent store whose generic intents define the classes")
@click.option("--domain-model", required=True, type=click.Path(exists=True, dir_okay=False),
              help="trained domain model; its score is an input feature")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--seed", default=0, show_default=True, type=int)
@guarded
def train_generic_cmd(data: str, store: str, domain_model: str, out: str, seed: int) -> None:
    """Train the generic intent classifier.

    Classes come from the store's generic intents; their curated queries
    are training rows, and --data adds more labeled rows on top.
    """
    snapshot = IntentStore(store).load()
    generic_ids = {i.id for i in snapshot.intents if i.kind == "generic"}
    if not generic_ids:
        raise ValueError(f"store {store} has no generic intents to train on")

    dom = chat_domain.load_model(domain_model)
    semantic = provider_from_spec(dom.config.provider_spec)
    sentiment = default_sentiment_provider()
    local_moderation = ModerationConfig()

    def featurize(text: str, semantic_vector=None):
        nq = normalize(RawQuery(text=text), dom.stopwords)
        sem = semantic.embed(nq) if semantic_vector is None else semantic_vector
        signal = moderate(nq.text, local_moderation)
        chat = chat_domain.score(nq.text, dom, semantic)
        return nq.text, generic_intent.assemble_features(sem, sentiment.embed(nq), signal, chat)

    rows = _read_tsv(data, 3, "generic")
    unknown = sorted({label for _, (_, _, label) in rows if label not in generic_ids})
    if unknown:
        raise ValueError(f"{data}: labels not defined as generic intents: {unknown}")

    examples = []
    covered: set[tuple[str, str]] = set()
    for intent in snapshot.intents:
        if intent.kind != "generic":
            continue
        for nq, emb in intent.curated_queries:
            key, features = featurize(nq.text, emb)
            if (intent.id, key) in covered:
                continue
            covered.add((intent.id, key))
            examples.append((features, intent.id))
    for _lineno, (text, _weight, label) in rows:
        key, features = featurize(text)
        if (label, key) in covered:
            continue
        covered.add((label, key))
        examples.append((features, label))

    model = generic_intent.train_generic(examples, generic_intent.GenericTrainConfig(seed=seed))
    generic_intent.save_model(model, out)
    click.echo(
        json.dumps(
            {
                "classes": len(model.class_ids),
                "examples": len(examples),
                "holdout_accuracy": model.holdout_accuracy,
                "out": out,
            }
        )
    )


@cli.command()
@click.option("--queries", required=True, type=click.Path(exists=True, dir_okay=False),
              help="TSV: text, weight")
@click.option("--mode", required=True, type=click.Choice(["specific", "generic"]))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--epsilon", type=float, default=None, help="override the mode default")
@click.option("--min-points", type=int, default=None, help="override the mode default")
@click.option("--top-k", type=int, default=None, help="override the mode default")
@guarded
def mine(queries: str, mode: str, out: str, epsilon, min_points, top_k) -> None:
    """Cluster a query log into a ranked annotation batch."""
    overrides = {
        k: v
        for k, v in (("epsilon", epsilon), ("min_points", min_points), ("top_k", top_k))
        if v is not None
    }
    config = MiningConfig.for_mode(mode, **overrides)
    stopwords = load_stopwords()
    provider = default_semantic_provider()
    pairs = []
    for i, (lineno, (text, weight)) in enumerate(_read_tsv(queries, 2, "mining")):
        raw = _weighted_query(queries, lineno, text, weight, id=f"q{i}")
        pairs.append((raw, provider.embed(normalize(raw, stopwords))))
    batch = rank_and_export(cluster(pairs, config), config)
    batch.save(out)
    click.echo(json.dumps({"batch_id": batch.id, "clusters": len(batch.clusters), "out": out}))


@cli.group()
def annotate() -> None:
    """Annotation batch operations."""


@annotate.command("apply")
@click.option("--batch", "batch_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--decisions", "decisions_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="JSON with a decisions list, as written by the review service")
@click.option("--store", "store_path", required=True, type=click.Path(file_okay=False))
@guarded
def annotate_apply(batch_path: str, decisions_path: str, store_path: str) -> None:
    """Turn a fully decided batch into a new store snapshot."""
    batch = AnnotationBatch.load(batch_path)
    doc = json.loads(Path(decisions_path).read_text("utf-8"))
    if isinstance(doc, dict):
        if doc.get("batch_id") not in (None, batch.id):
            raise ValueError(
                f"{decisions_path} belongs to batch {doc['batch_id']!r}, not {batch.id!r}"
            )
        raw_decisions = doc["decisions"]
    else:
        raw_decisions = doc
    decisions = [AnnotationDecision.from_json(d) for d in raw_decisions]
    version, added = commit_annotations(IntentStore(store_path), batch, decisions)
    click.echo(json.dumps({"store_version": version, "intents_added": len(added)}))


@cli.command()
@click.option("--text", required=True)
@click.option("--trace", is_flag=True, help="include per-stage scores")
@model_options
@guarded
def classify(text: str, trace: bool, config_path, domain_model, generic_model, store, rules) -> None:
    """Print the understanding response for one query."""
    cfg = _service_config(
        config_path,
        domain_model=domain_model,
        generic_model=generic_model,
        store=store,
        rules=rules,
    )
    bundle = build_bundle(cfg)
    response = bundle.understand(text, trace=trace)
    click.echo(json.dumps(response, indent=2, sort_keys=True))


@cli.command("eval")
@click.option("--testset", required=True, type=click.Path(exists=True, dir_okay=False),
              help="TSV: text, weight, domain, intent or -, seen|held")
@click.option("--json", "as_json", is_flag=True, help="print the report as JSON")
@model_options
@guarded
def eval_cmd(testset: str, as_json: bool, config_path, domain_model, generic_model, store, rules) -> None:
    """Score a labeled test set against the loaded pipeline."""
    rows = metrics.load_eval_rows(testset)
    cfg = _service_config(
        config_path,
        domain_model=domain_model,
        generic_model=generic_model,
        store=store,
        rules=rules,
    )
    bundle = build_bundle(cfg)
    report = metrics.evaluate_pipeline(bundle, rows)
    if as_json:
        click.echo(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    else:
        for line in report.format_lines():
            click.echo(line)


@cli.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="JSON service config; environment variables override it")
@guarded
def serve(config_path) -> None:
    """Run the HTTP service until interrupted."""
    run(ServiceConfig.load(config_path))


@cli.command("synth-corpus")
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--seed", default=7, show_default=True, type=int)
@guarded
def synth_corpus(out: str, seed: int) -> None:
    """Write the seeded synthetic corpus files."""
    manifest = synth.write_corpus(out, seed)
    click.echo(json.dumps(manifest, sort_keys=True))


def main(argv=None) -> None:
    """Entry point; failures of any kind print one JSON line on stderr."""
    try:
        cli(args=argv, standalone_mode=False)
    except click.exceptions.Exit as e:
        raise SystemExit(e.exit_code)
    except click.Abort:
        raise SystemExit(130)
    except click.ClickException as e:
        click.echo(json.dumps({"error": e.format_message()}), err=True)
        raise SystemExit(e.exit_code)


if __name__ == "__main__":
    main()
