"""Shipping gate for the whole package.

Every test here checks one release requirement end to end and prints a
single PASS/FAIL verdict line (visible with `pytest -s`).  Thresholds and
tolerances are pinned as constants; weakening them is a release decision,
not a test fix.
"""
import itertools
import json
import math
import shutil
import statistics
import threading
import time
from collections import Counter

import numpy as np
import pytest
from click.testing import CliRunner
from fastapi.testclient import TestClient

import oracles
from chitchat import chat_domain, generic_intent, intent_mining
from chitchat.aggregator import aggregate
from chitchat.chat_domain import (
    AUGMENTED_WEIGHT,
    JUDGED_WEIGHT,
    ChatDomainScore,
    JudgedQuery,
    Judgment,
    build_training_set,
    tree_depth,
)
from chitchat.cli import cli
from chitchat.generic_intent import FEATURE_DIM, GenericTrainConfig
from chitchat.intent_mining import Cluster, ClusterMember, MiningConfig
from chitchat.intent_store import IntentStore
from chitchat.moderation import ModerationSignal
from chitchat.nn import FeedForward
from chitchat.service import ServiceConfig, create_app
from chitchat.specific_intent import (
    IntentDefinition,
    IntentPrediction,
    MatchType,
    SpecificIntentMatcher,
)
from chitchat.synth import STOPWORD_WRAPS
from chitchat.text_pipeline import NormalizedQuery, RawQuery, normalize

FORMULA_TOLERANCE = 1e-9
GRADIENT_TOLERANCE = 1e-4
SOFTMAX_TOLERANCE = 1e-6
DOMAIN_F1_FLOOR = 0.85
GENERIC_ACCURACY_FLOOR = 0.80
P50_LIMIT_MS = 50.0
STRESS_REQUESTS = 10_000

EMBED_DIM = 300


def verdict(name: str, ok: bool, detail: str) -> None:
    print(f"{'PASS' if ok else 'FAIL'}  {name}  ({detail})")
    assert ok, f"{name}: {detail}"


def unit_vector(coord: int) -> np.ndarray:
    v = np.zeros(EMBED_DIM)
    v[coord] = 1.0
    return v


def rotated(theta: float) -> np.ndarray:
    v = np.zeros(EMBED_DIM)
    v[0] = math.cos(theta)
    v[1] = math.sin(theta)
    return v


def cluster_with(pairs, centroid) -> Cluster:
    members = [
        ClusterMember(
            query=RawQuery(text=f"m{i}", weight=w), distance_to_centroid=d, weight=w
        )
        for i, (d, w) in enumerate(pairs)
    ]
    return Cluster(id=0, members=members, centroid=centroid)


# -- shared trained artifacts --------------------------------------------------

CHAT_TEXTS = [
    "good morning",
    "good morning sunshine",
    "tell me a joke",
    "tell me a funny joke",
    "how are you",
    "sing me a song",
    "sing me a lullaby",
    "i love you",
    "are you a robot",
    "thank you so much",
]
TASK_TEXTS = [
    "set an alarm for six",
    "turn off the kitchen lights",
    "capital of france",
    "population of india",
    "play some jazz music",
    "remind me to pay rent",
    "distance from earth to the moon",
    "navigate to the airport",
    "convert ten dollars to euros",
    "boiling point of water",
]
FAMILY_BASES = ("tell me a joke", "sing me a song", "good morning")


def judged(text, label):
    return JudgedQuery(query=RawQuery(text=text), judgments=(label,) * 4)


def train_small_domain_model():
    examples = build_training_set(
        [judged(t, Judgment.CHAT) for t in CHAT_TEXTS]
        + [judged(t, Judgment.TASK) for t in TASK_TEXTS]
    )
    return chat_domain.train(examples, chat_domain.ChatDomainTrainConfig(seed=11))


@pytest.fixture(scope="module")
def artifacts(tmp_path_factory, stopwords, semantic):
    root = tmp_path_factory.mktemp("gate")
    model = train_small_domain_model()
    chat_domain.save_model(model, str(root / "domain.model"))
    queries = []
    for base in FAMILY_BASES:
        for wrap in STOPWORD_WRAPS:
            raw = RawQuery(text=wrap.format(q=base))
            queries.append((raw, semantic.embed(normalize(raw, stopwords))))
    config = MiningConfig(mode="specific", epsilon=0.2, min_points=3, top_k=10)
    batch = intent_mining.rank_and_export(intent_mining.cluster(queries, config), config)
    (root / "batches").mkdir()
    batch.save(root / "batches" / f"{batch.id}.batch.doc")
    return {"root": root, "model": model, "batch": batch}


# 1. effectiveness formulas against an independent reference ------------------


def test_effectiveness_formulas_match_reference():
    start = time.perf_counter()
    worst = 0.0

    worked = cluster_with([(0.1, 5.0), (0.3, 2.0)], unit_vector(0))
    worst = max(worst, abs(intent_mining.effectiveness_specific(worked) - 5.9))
    neighbours = [worked.centroid, rotated(math.acos(0.5))]
    worst = max(
        worst, abs(intent_mining.effectiveness_generic(worked, neighbours) - 1.475)
    )

    rng = np.random.default_rng(42)
    for _ in range(24):
        pairs = [
            (float(rng.uniform(0.0, 0.8)), float(rng.uniform(0.05, 6.0)))
            for _ in range(int(rng.integers(2, 9)))
        ]
        centroid = rng.normal(size=EMBED_DIM)
        centroid /= float(np.linalg.norm(centroid))
        c = cluster_with(pairs, centroid)
        expected = oracles.effectiveness_reference(pairs)
        worst = max(worst, abs(intent_mining.effectiveness_specific(c) - expected))

        others = []
        for _ in range(3):
            o = rng.normal(size=EMBED_DIM)
            others.append(o / float(np.linalg.norm(o)))
        dc_min = min(1.0 - float(np.dot(centroid, o)) for o in others)
        expected_generic = dc_min * dc_min * expected
        got = intent_mining.effectiveness_generic(c, [centroid, *others])
        worst = max(worst, abs(got - expected_generic))

    elapsed = time.perf_counter() - start
    verdict(
        "effectiveness formulas match hand computation",
        worst <= FORMULA_TOLERANCE and elapsed < 1.0,
        f"26 clusters, worst abs diff {worst:.2e}, {elapsed:.2f}s",
    )


# 2. clustering against a brute-force reference --------------------------------


def _geometry(rng: np.random.Generator, n: int) -> np.ndarray:
    """Random cluster structure in an 8-dim subspace (same cosine geometry)."""
    k = int(rng.integers(2, 7))
    centers = rng.normal(size=(k, 8))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    spread = float(rng.uniform(0.05, 0.45))
    rows = np.empty((n, 8))
    for j in range(n):
        if rng.random() < 0.15:
            rows[j] = rng.normal(size=8)
        else:
            rows[j] = centers[int(rng.integers(k))] + rng.normal(scale=spread, size=8)
    assert float(np.linalg.norm(rows, axis=1).min()) > 1e-8
    return rows


def test_clustering_matches_brute_force_reference():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    combos = [(0.2, 3), (0.2, 5), (0.2, 10), (0.4, 3), (0.4, 5), (0.4, 10)]
    sizes = [int(rng.integers(40, 140)) for _ in range(44)] + [200, 250, 300, 350, 400, 500]
    points = 0
    for i, n in enumerate(sizes):
        epsilon, min_points = combos[i % len(combos)]
        rows = _geometry(rng, n)
        padded = np.zeros((n, EMBED_DIM))
        padded[:, :8] = rows
        queries = [(RawQuery(text=f"q{j:04d}"), padded[j]) for j in range(n)]
        config = MiningConfig(mode="specific", epsilon=epsilon, min_points=min_points, top_k=10)
        found = intent_mining.cluster(queries, config)
        lib = {c.id: frozenset(int(m.query.text[1:]) for m in c.members) for c in found}
        ref: dict[int, set[int]] = {}
        for idx, label in enumerate(oracles.dbscan_reference(rows, epsilon, min_points)):
            if label >= 0:
                ref.setdefault(label, set()).add(idx)
        assert lib == {k: frozenset(v) for k, v in ref.items()}, (
            f"partition mismatch: n={n} eps={epsilon} min_points={min_points}"
        )
        points += n
    elapsed = time.perf_counter() - start
    verdict(
        "clustering partitions equal the brute-force reference",
        elapsed < 30.0,
        f"{len(sizes)} instances, {points} points, {elapsed:.1f}s",
    )


# 3. fuzzy scores against an exhaustive scan -----------------------------------


def _bare_query(marker: str) -> NormalizedQuery:
    # an empty key keeps these rows out of the exact index
    return NormalizedQuery(original=marker, tokens=(), tokens_with_stopwords=())


def test_fuzzy_scores_match_exhaustive_scan():
    start = time.perf_counter()
    rng = np.random.default_rng(5)
    dim, n_intents, per_intent = 32, 100, 100
    centers = rng.normal(size=(n_intents, dim))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    curated: dict[str, list[np.ndarray]] = {}
    intents = []
    for i in range(n_intents):
        vectors = [
            centers[i] + rng.normal(scale=0.25, size=dim) for _ in range(per_intent)
        ]
        name = f"intent_{i:03d}"
        curated[name] = vectors
        intents.append(
            IntentDefinition(
                id=name,
                friendly_name=name,
                kind="specific",
                curated_queries=[(_bare_query(f"{name}/{j}"), v) for j, v in enumerate(vectors)],
            )
        )
    matcher = SpecificIntentMatcher(intents)

    queries = []
    for _ in range(20):
        i = int(rng.integers(n_intents))
        j = int(rng.integers(per_intent))
        queries.append(curated[f"intent_{i:03d}"][j] + rng.normal(scale=0.02, size=dim))
    for _ in range(10):
        queries.append(rng.normal(size=dim))

    worst = 0.0
    for q in queries:
        everything = {p.intent_id: p.score for p in matcher.match_fuzzy(q, threshold=-2.0)}
        reference = oracles.fuzzy_reference(q, curated)
        assert set(everything) == set(reference)
        for intent_id, expected in reference.items():
            worst = max(worst, abs(everything[intent_id] - max(0.0, expected)))
        passing = matcher.match_fuzzy(q)
        assert all(p.score >= 0.9 for p in passing)
        expected_ids = {i for i, s in reference.items() if s >= 0.9}
        assert {p.intent_id for p in passing} == expected_ids

    duplicates = 0
    for _ in range(10):
        i = int(rng.integers(n_intents))
        j = int(rng.integers(per_intent))
        name = f"intent_{i:03d}"
        hits = {p.intent_id: p for p in matcher.match_fuzzy(curated[name][j] * 2.0)}
        assert abs(hits[name].score - 1.0) <= FORMULA_TOLERANCE
        assert hits[name].match_type is MatchType.FUZZY
        duplicates += 1

    elapsed = time.perf_counter() - start
    verdict(
        "fuzzy scores equal the exhaustive scan",
        worst <= FORMULA_TOLERANCE and elapsed < 10.0,
        f"{n_intents * per_intent} curated rows, {len(queries)} queries, "
        f"{duplicates} exact duplicates at 1.0, worst diff {worst:.2e}, {elapsed:.1f}s",
    )


# 4. analytic gradients against finite differences ------------------------------


def _sampled_numeric(f, params: np.ndarray, coords, step: float = 1e-5) -> np.ndarray:
    out = np.empty(len(coords))
    for row, i in enumerate(coords):
        up = params.copy()
        up[i] += step
        down = params.copy()
        down[i] -= step
        out[row] = (f(up) - f(down)) / (2.0 * step)
    return out


def _gradient_instance(rng: np.random.Generator, sizes, output) -> float:
    net = FeedForward.init(tuple(sizes), output, seed=int(rng.integers(1_000_000)))
    n = int(rng.integers(2, 6))
    X = rng.normal(size=(n, sizes[0]))
    if output == "logistic":
        y = (rng.random(size=n) > 0.5).astype(float)
    else:
        y = rng.integers(0, sizes[-1], size=n)
    w = rng.uniform(0.5, 5.0, size=n)
    l2 = float(rng.choice([0.0, 1e-4, 1e-3]))

    def loss_at(flat):
        net.set_flat_params(flat)
        loss, _, _ = net.loss_and_grad(X, y, w, l2)
        return loss

    flat = net.get_flat_params().copy()
    _, analytic = net.flat_grad(X, y, w, l2)
    numeric = oracles.numeric_gradient(loss_at, flat)
    return float(oracles.relative_errors(analytic, numeric).max())


def test_gradients_match_finite_differences():
    start = time.perf_counter()
    rng = np.random.default_rng(17)
    worst = 0.0
    for _ in range(50):
        sizes = (int(rng.integers(3, 11)), 64, 1)
        worst = max(worst, _gradient_instance(rng, sizes, "logistic"))
    for _ in range(50):
        sizes = (
            int(rng.integers(5, 13)),
            int(rng.integers(8, 25)),
            int(rng.integers(8, 25)),
            int(rng.integers(3, 7)),
        )
        worst = max(worst, _gradient_instance(rng, sizes, "softmax"))

    # spot-check the production-sized head on a sample of coordinates
    net = FeedForward.init((FEATURE_DIM, 300, 300, 5), "softmax", seed=3)
    X = rng.normal(size=(3, FEATURE_DIM))
    y = rng.integers(0, 5, size=3)
    w = rng.uniform(0.5, 3.0, size=3)

    def loss_at(flat):
        net.set_flat_params(flat)
        loss, _, _ = net.loss_and_grad(X, y, w, 1e-5)
        return loss

    flat = net.get_flat_params().copy()
    _, analytic = net.flat_grad(X, y, w, 1e-5)
    coords = rng.choice(flat.size, size=60, replace=False)
    numeric = _sampled_numeric(loss_at, flat, coords)
    spot = float(oracles.relative_errors(analytic[coords], numeric).max())
    worst = max(worst, spot)

    elapsed = time.perf_counter() - start
    verdict(
        "analytic gradients match finite differences",
        worst < GRADIENT_TOLERANCE,
        f"100 random nets + full-size spot check, worst rel err {worst:.2e}, {elapsed:.1f}s",
    )


# 5. structural invariants -------------------------------------------------------


def test_structural_invariants(artifacts):
    rng = np.random.default_rng(9)

    sem = rng.normal(size=300)
    sen = rng.normal(size=150)
    signal = ModerationSignal(adult_score=0.25, offensive_score=0.5, source="local")
    chat = ChatDomainScore(lexical_score=0.1, semantic_score=0.9, probability=0.7)
    features = generic_intent.assemble_features(sem, sen, signal, chat)
    assert features.shape == (FEATURE_DIM,) == (453,)
    assert np.array_equal(features[:300], sem)
    assert np.array_equal(features[300:450], sen)
    assert features[450] == 0.25 and features[451] == 0.5 and features[452] == 0.7

    examples = []
    for label in ("a", "b", "c"):
        base = rng.normal(size=FEATURE_DIM)
        for _ in range(6):
            examples.append((base + rng.normal(scale=0.1, size=FEATURE_DIM), label))
    model = generic_intent.train_generic(examples, GenericTrainConfig(seed=1, epochs=10))
    worst_sum_err = 0.0
    for _ in range(50):
        probs = generic_intent.predict_generic(rng.normal(size=FEATURE_DIM), model)
        assert set(probs) == {"a", "b", "c"}
        worst_sum_err = max(worst_sum_err, abs(sum(probs.values()) - 1.0))
    assert worst_sum_err <= SOFTMAX_TOLERANCE

    depth = tree_depth(artifacts["model"].tree)
    assert depth <= 5

    mixed = build_training_set(
        [
            judged("hello there", Judgment.CHAT),
            JudgedQuery(
                query=RawQuery(text="borderline"),
                judgments=(Judgment.CHAT, Judgment.CHAT, Judgment.TASK, Judgment.JUNK),
            ),
            judged("set a timer", Judgment.TASK),
        ],
        augmented_positives=[RawQuery(text="hey hello there")],
        augmented_negatives=[RawQuery(text="set a timer now")],
    )
    weights = {ex.source: ex.weight for ex in mixed}
    assert weights == {"judged": JUDGED_WEIGHT, "augmented": AUGMENTED_WEIGHT}
    assert JUDGED_WEIGHT / AUGMENTED_WEIGHT == 5.0
    assert len([ex for ex in mixed if ex.source == "judged"]) == 2  # split vote dropped

    verdict(
        "structural invariants hold",
        True,
        f"453-feature layout, softmax sum err {worst_sum_err:.1e}, "
        f"tree depth {depth} <= 5, 5:1 sample weights",
    )


# 6. safety rules over an exhaustive grid ----------------------------------------


def _expected_aggregate(spec, generic, adult, offensive):
    rules = []
    safe = True
    if generic.get("criticism_generic", 0.0) > 0.5:
        safe = False
        rules.append("R1")
    survivors = list(spec)
    if generic.get("criticism_response", 0.0) >= 0.5:
        kept = [s for s in survivors if s.match_type is not MatchType.FUZZY]
        if len(kept) != len(survivors):
            rules.append("R2")
        survivors = kept
    if max(adult, offensive) >= 0.8:
        safe = False
        rules.append("R3")
    ranked = sorted(survivors, key=lambda p: (-p.score, p.intent_id))
    hits = sorted(
        ((i, p) for i, p in generic.items() if p > 0.2), key=lambda ip: (-ip[1], ip[0])
    )
    if ranked:
        ceiling = ranked[-1].score * 0.99
        appended = [(i, p * ceiling) for i, p in hits]
    else:
        appended = hits
    return ranked, appended, safe, tuple(rules)


def test_safety_rules_on_grid():
    exact = IntentPrediction("greet", 1.0, MatchType.EXACT)
    fuzzy = IntentPrediction("joke", 0.93, MatchType.FUZZY)
    spec_options = ((), (exact,), (fuzzy,), (exact, fuzzy))
    combos = 0
    for spec, cg, cr, adult, offensive, chat_p in itertools.product(
        spec_options, (0.0, 0.4, 0.6), (0.0, 0.5), (0.0, 0.8), (0.0, 0.9), (0.2, 0.8)
    ):
        generic = {"criticism_generic": cg, "criticism_response": cr, "smalltalk": 0.35}
        signal = ModerationSignal(adult_score=adult, offensive_score=offensive, source="local")
        chat = ChatDomainScore(0.0, 0.0, chat_p)
        result = aggregate(list(spec), generic, signal, chat)
        ranked, appended, safe, rules = _expected_aggregate(spec, generic, adult, offensive)
        assert result.safe_for_autogeneration == safe, (spec, cg, cr, adult, offensive)
        assert result.applied_rules == rules
        assert result.chat_probability == chat_p
        got = [(p.intent_id, p.score, p.match_type) for p in result.intents]
        want = [(p.intent_id, p.score, p.match_type) for p in ranked] + [
            (i, pytest.approx(s), MatchType.GENERIC_MODEL) for i, s in appended
        ]
        assert got == want
        if ranked and appended:
            assert max(s for _, s, _ in got[len(ranked):]) < ranked[-1].score
        combos += 1

    rng = np.random.default_rng(23)
    fuzz = 0
    for _ in range(300):
        spec = list(spec_options[int(rng.integers(len(spec_options)))])
        generic = {
            "criticism_generic": float(rng.random()),
            "criticism_response": float(rng.random()),
        }
        adult, offensive = float(rng.random()), float(rng.random())
        signal = ModerationSignal(adult_score=adult, offensive_score=offensive, source="local")
        chat = ChatDomainScore(0.0, 0.0, 0.5)
        low = aggregate(spec, generic, signal, chat)
        bumped = ModerationSignal(
            adult_score=min(1.0, adult + float(rng.random()) * (1.0 - adult)),
            offensive_score=min(1.0, offensive + float(rng.random()) * (1.0 - offensive)),
            source="local",
        )
        harsher = dict(generic)
        harsher["criticism_generic"] = min(1.0, generic["criticism_generic"] + float(rng.random()))
        high = aggregate(spec, harsher, bumped, chat)
        if not low.safe_for_autogeneration:
            assert not high.safe_for_autogeneration
        fuzz += 1

    verdict(
        "safety rules verified on grid",
        True,
        f"{combos} grid combinations, {fuzz} monotone-safety fuzz cases",
    )


# 7. full pipeline on the synthetic corpus ---------------------------------------


def _run_cli(runner, args):
    result = runner.invoke(cli, args)
    assert result.exit_code == 0, result.stderr or result.output
    return json.loads(result.stdout)


def _scripted_decisions(batch, label_of, families):
    chosen: set[str] = set()
    decisions = []
    for c in batch.clusters:
        mass = Counter()
        for text, weight, _distance in c.members:
            mass[label_of[text]] += weight
        label = mass.most_common(1)[0][0]
        if label in families and label not in chosen:
            chosen.add(label)
            name = f"{label} exact" if batch.mode == "specific" else label
            decisions.append(
                {"cluster_id": c.id, "action": "choose", "intent_name": name}
            )
        else:
            decisions.append(
                {"cluster_id": c.id, "action": "reject", "reason": f"dominated by {label}"}
            )
    return decisions, chosen


def test_full_pipeline_on_synthetic_corpus(tmp_path):
    start = time.perf_counter()
    runner = CliRunner()
    corpus = tmp_path / "corpus"
    manifest = _run_cli(runner, ["synth-corpus", "--out", str(corpus), "--seed", "7"])
    families = set(manifest["families"])
    label_of = dict(
        line.split("\t")
        for line in (corpus / "labels.tsv").read_text("utf-8").splitlines()
    )

    domain_model = tmp_path / "domain.model"
    _run_cli(
        runner,
        ["train-domain", "--data", str(corpus / "domain_train.tsv"),
         "--out", str(domain_model), "--seed", "0"],
    )

    store = tmp_path / "store"
    batch_path = tmp_path / "specific.batch.doc"
    _run_cli(
        runner,
        ["mine", "--mode", "specific", "--queries", str(corpus / "mining_queries.tsv"),
         "--epsilon", "0.3", "--min-points", "8", "--top-k", "40",
         "--out", str(batch_path)],
    )
    batch = intent_mining.AnnotationBatch.load(batch_path)
    decisions, chosen_specific = _scripted_decisions(batch, label_of, families)
    decisions_path = tmp_path / "specific.decisions.json"
    decisions_path.write_text(json.dumps(decisions), "utf-8")
    applied = _run_cli(
        runner,
        ["annotate", "apply", "--batch", str(batch_path), "--decisions",
         str(decisions_path), "--store", str(store)],
    )
    assert applied == {"store_version": 1, "intents_added": len(chosen_specific)}

    gbatch_path = tmp_path / "generic.batch.doc"
    _run_cli(
        runner,
        ["mine", "--mode", "generic", "--queries", str(corpus / "mining_queries.tsv"),
         "--epsilon", "0.4", "--min-points", "8", "--top-k", "40",
         "--out", str(gbatch_path)],
    )
    gbatch = intent_mining.AnnotationBatch.load(gbatch_path)
    gdecisions, chosen_generic = _scripted_decisions(gbatch, label_of, families)

    # the generic batch is reviewed and applied through the service
    batches_dir = tmp_path / "batches"
    batches_dir.mkdir()
    shutil.copy(gbatch_path, batches_dir / f"{gbatch.id}.batch.doc")
    client = TestClient(
        create_app(
            ServiceConfig(
                domain_model=str(domain_model),
                store=str(store),
                batches=str(batches_dir),
            )
        )
    )
    for d in gdecisions:
        assert client.post(
            f"/v1/annotation/batches/{gbatch.id}/decisions", json=d
        ).status_code == 200
    response = client.post(f"/v1/annotation/batches/{gbatch.id}/apply")
    assert response.status_code == 200
    assert response.json()["store_version"] == 2
    assert response.json()["intents_added"] == len(chosen_generic)
    assert IntentStore(store).latest_version() == 2

    generic_model = tmp_path / "generic.model"
    trained = _run_cli(
        runner,
        ["train-generic", "--data", str(corpus / "generic_train.tsv"),
         "--store", str(store), "--domain-model", str(domain_model),
         "--out", str(generic_model), "--seed", "0"],
    )
    assert trained["classes"] == len(chosen_generic)

    report = _run_cli(
        runner,
        ["eval", "--testset", str(corpus / "eval_heldout.tsv"), "--json",
         "--domain-model", str(domain_model), "--generic-model", str(generic_model),
         "--store", str(store)],
    )
    f1 = report["domain"]["weighted"]["f1"]
    accuracy = report["generic_accuracy"]["held"]
    elapsed = time.perf_counter() - start
    verdict(
        "synthetic corpus pipeline clears the quality floor",
        f1 >= DOMAIN_F1_FLOOR and accuracy >= GENERIC_ACCURACY_FLOOR and elapsed < 300.0,
        f"held-out weighted F1 {f1:.3f} >= {DOMAIN_F1_FLOOR}, "
        f"generic accuracy {accuracy:.3f} >= {GENERIC_ACCURACY_FLOOR}, {elapsed:.0f}s",
    )


# 8. service latency and atomic snapshot swaps -----------------------------------


def _decide_everything(client, batch):
    for i, c in enumerate(batch.clusters):
        body = {"cluster_id": c.id, "action": "choose", "intent_name": f"Intent {i}"}
        assert client.post(
            f"/v1/annotation/batches/{batch.id}/decisions", json=body
        ).status_code == 200


def _fresh_service(artifacts, tmp_path, name):
    root = artifacts["root"]
    batches = tmp_path / f"{name}-batches"
    shutil.copytree(root / "batches", batches)
    config = ServiceConfig(
        domain_model=str(root / "domain.model"),
        store=str(tmp_path / f"{name}-store"),
        batches=str(batches),
    )
    return create_app(config)


def test_service_latency_and_atomic_reload(artifacts, tmp_path):
    batch = artifacts["batch"]

    app = _fresh_service(artifacts, tmp_path, "latency")
    client = TestClient(app)
    _decide_everything(client, batch)
    assert client.post(f"/v1/annotation/batches/{batch.id}/apply").status_code == 200
    for _ in range(20):
        client.post("/v1/understand", json={"text": "tell me a joke"})
    laps = []
    for _ in range(200):
        t0 = time.perf_counter()
        response = client.post("/v1/understand", json={"text": "tell me a joke"})
        laps.append((time.perf_counter() - t0) * 1000.0)
        assert response.status_code == 200
    p50 = statistics.median(laps)

    app = _fresh_service(artifacts, tmp_path, "stress")
    setup = TestClient(app)
    _decide_everything(setup, batch)
    expected_intents = {f"intent_{i}" for i in range(len(batch.clusters))}
    per_thread = STRESS_REQUESTS // 8
    buckets = [[] for _ in range(8)]
    begin = threading.Barrier(9)

    def hammer(bucket):
        worker = TestClient(app)
        begin.wait()
        for _ in range(per_thread):
            r = worker.post(
                "/v1/understand", json={"text": "tell me a joke", "trace": True}
            )
            body = r.json()
            bucket.append((r.status_code, body["trace"]["store_version"], body["intents"]))

    threads = [threading.Thread(target=hammer, args=(b,)) for b in buckets]
    for t in threads:
        t.start()
    begin.wait()
    time.sleep(0.25)
    assert setup.post(f"/v1/annotation/batches/{batch.id}/apply").status_code == 200
    for t in threads:
        t.join()

    before = after = 0
    for bucket in buckets:
        for status, version, intents in bucket:
            assert status == 200
            if version is None:
                assert intents == []
                before += 1
            else:
                assert version == 1
                assert intents and intents[0]["id"] in expected_intents
                after += 1
    total = before + after
    verdict(
        "service p50 within budget and snapshot swaps are atomic",
        p50 < P50_LIMIT_MS and total == STRESS_REQUESTS,
        f"p50 {p50:.2f}ms < {P50_LIMIT_MS:.0f}ms, {total} stressed requests "
        f"({before} before swap, {after} after), zero mixed-version responses",
    )


# 9. reproducibility ---------------------------------------------------------------


def test_identical_seeds_reproduce_artifacts(artifacts, tmp_path, stopwords, semantic):
    model_a = train_small_domain_model()
    model_b = train_small_domain_model()
    chat_domain.save_model(model_a, str(tmp_path / "a.model"))
    chat_domain.save_model(model_b, str(tmp_path / "b.model"))
    domain_identical = (tmp_path / "a.model").read_bytes() == (tmp_path / "b.model").read_bytes()

    rng = np.random.default_rng(31)
    examples = []
    for label in ("x", "y"):
        base = rng.normal(size=FEATURE_DIM)
        for _ in range(6):
            examples.append((base + rng.normal(scale=0.1, size=FEATURE_DIM), label))
    generic_intent.save_model(
        generic_intent.train_generic(list(examples), GenericTrainConfig(seed=4, epochs=20)),
        str(tmp_path / "ga.model"),
    )
    generic_intent.save_model(
        generic_intent.train_generic(list(examples), GenericTrainConfig(seed=4, epochs=20)),
        str(tmp_path / "gb.model"),
    )
    generic_identical = (tmp_path / "ga.model").read_bytes() == (tmp_path / "gb.model").read_bytes()

    queries = []
    for base in FAMILY_BASES:
        for wrap in STOPWORD_WRAPS:
            raw = RawQuery(text=wrap.format(q=base))
            queries.append((raw, semantic.embed(normalize(raw, stopwords))))
    config = MiningConfig(mode="specific", epsilon=0.2, min_points=3, top_k=10)
    for name in ("ma.doc", "mb.doc"):
        intent_mining.rank_and_export(
            intent_mining.cluster(queries, config), config
        ).save(tmp_path / name)
    batch_identical = (tmp_path / "ma.doc").read_bytes() == (tmp_path / "mb.doc").read_bytes()

    root = artifacts["root"]
    served = []
    for _ in range(2):
        client = TestClient(
            create_app(ServiceConfig(domain_model=str(root / "domain.model")))
        )
        payloads = []
        for text in ("tell me a joke", "so good morning then", "set an alarm for six"):
            body = client.post("/v1/understand", json={"text": text, "trace": True}).json()
            body.pop("latency_ms")
            payloads.append(body)
        served.append(payloads)
    responses_identical = served[0] == served[1]

    verdict(
        "identical seeds reproduce artifacts and responses",
        domain_identical and generic_identical and batch_identical and responses_identical,
        "byte-identical domain, generic and batch files; "
        "identical responses apart from latency",
    )
