import numpy as np
import pytest

import oracles
from chitchat import intent_mining as im
from chitchat.text_pipeline import RawQuery


def unit(i, dim=im.EMBEDDING_DIM):
    v = np.zeros(dim)
    v[i] = 1.0
    return v


def rotated(theta, dim=im.EMBEDDING_DIM):
    v = np.zeros(dim)
    v[0] = np.cos(theta)
    v[1] = np.sin(theta)
    return v


def queries_at(vectors, prefix="q", weight=1.0):
    return [(RawQuery(text=f"{prefix}{i:04d}", weight=weight), v) for i, v in enumerate(vectors)]


# -- config -----------------------------------------------------------------------


def test_mode_defaults():
    spec = im.MiningConfig.for_mode("specific")
    assert (spec.epsilon, spec.min_points, spec.top_k) == (0.2, 100, 300)
    gen = im.MiningConfig.for_mode("generic")
    assert (gen.epsilon, gen.min_points, gen.top_k) == (0.4, 1000, 150)


def test_mode_overrides():
    c = im.MiningConfig.for_mode("specific", epsilon=0.3, min_points=None)
    assert c.epsilon == 0.3
    assert c.min_points == 100


def test_config_validation():
    with pytest.raises(ValueError):
        im.MiningConfig(mode="both", epsilon=0.2, min_points=3, top_k=5)
    with pytest.raises(ValueError):
        im.MiningConfig(mode="specific", epsilon=0.0, min_points=3, top_k=5)
    with pytest.raises(ValueError):
        im.MiningConfig(mode="specific", epsilon=0.2, min_points=0, top_k=5)


# -- clustering --------------------------------------------------------------------


def test_two_tight_blobs_and_noise():
    vectors = [unit(0)] * 5 + [unit(1)] * 4 + [unit(2)]
    config = im.MiningConfig(mode="specific", epsilon=0.2, min_points=3, top_k=10)
    clusters = im.cluster(queries_at(vectors), config)
    assert [c.id for c in clusters] == [0, 1]
    sizes = sorted(len(c.members) for c in clusters)
    assert sizes == [4, 5]
    # the lone point is noise and appears nowhere
    texts = {m.query.text for c in clusters for m in c.members}
    assert "q0009" not in texts
    assert len(texts) == 9


def test_identical_points_have_zero_centroid_distance():
    vectors = [unit(0)] * 4
    config = im.MiningConfig(mode="specific", epsilon=0.2, min_points=3, top_k=10)
    clusters = im.cluster(queries_at(vectors), config)
    assert len(clusters) == 1
    for m in clusters[0].members:
        assert m.distance_to_centroid == pytest.approx(0.0, abs=1e-12)


def test_border_points_chain_through_core():
    theta = np.arccos(0.9)
    a, b, c = rotated(0.0), rotated(theta), rotated(2 * theta)
    # d(a,b) = d(b,c) = 0.1; d(a,c) = 0.38; only b sees 3 neighbors
    config = im.MiningConfig(mode="specific", epsilon=0.2, min_points=3, top_k=10)
    clusters = im.cluster(queries_at([a, b, c]), config)
    assert len(clusters) == 1
    assert len(clusters[0].members) == 3


def test_min_points_counts_distinct_texts_not_raw_rows():
    # three spellings of one utterance collapse to a single point
    rows = [
        (RawQuery("Hello", weight=2.0), unit(0)),
        (RawQuery("hello!", weight=3.0), unit(0)),
        (RawQuery("HELLO??", weight=1.0), unit(0)),
    ]
    config = im.MiningConfig(mode="specific", epsilon=0.2, min_points=3, top_k=10)
    assert im.cluster(rows, config) == []


def test_duplicate_weights_are_summed():
    rows = [
        (RawQuery("Hello", weight=2.0), unit(0)),
        (RawQuery("hello!", weight=3.0), unit(0)),
        (RawQuery("hey there", weight=1.0), unit(0)),
        (RawQuery("howdy", weight=1.0), unit(0)),
    ]
    config = im.MiningConfig(mode="specific", epsilon=0.2, min_points=3, top_k=10)
    clusters = im.cluster(rows, config)
    assert len(clusters) == 1
    weights = {m.query.text: m.weight for m in clusters[0].members}
    assert weights["Hello"] == 5.0
    assert weights["hey there"] == 1.0


def test_zero_embedding_rejected():
    rows = [(RawQuery("bad"), np.zeros(im.EMBEDDING_DIM))]
    config = im.MiningConfig(mode="specific", epsilon=0.2, min_points=1, top_k=10)
    with pytest.raises(ValueError):
        im.cluster(rows, config)


def test_empty_input_yields_no_clusters():
    config = im.MiningConfig(mode="specific", epsilon=0.2, min_points=3, top_k=10)
    assert im.cluster([], config) == []


def test_dc_min_between_orthogonal_blobs():
    vectors = [unit(0)] * 3 + [unit(1)] * 3
    config = im.MiningConfig(mode="specific", epsilon=0.2, min_points=3, top_k=10)
    clusters = im.cluster(queries_at(vectors), config)
    assert len(clusters) == 2
    for c in clusters:
        assert c.dc_min == pytest.approx(1.0, abs=1e-12)


def test_single_cluster_has_no_dc_min():
    vectors = [unit(0)] * 3
    config = im.MiningConfig(mode="specific", epsilon=0.2, min_points=3, top_k=10)
    clusters = im.cluster(queries_at(vectors), config)
    assert clusters[0].dc_min is None


def _blob_instance(seed, n_blobs=3, per_blob=20, spread=0.12):
    rng = np.random.default_rng(seed)
    rows = []
    for k in range(n_blobs):
        center = unit(3 * k)
        for _ in range(per_blob):
            v = center + spread * rng.normal(size=im.EMBEDDING_DIM) / np.sqrt(im.EMBEDDING_DIM)
            rows.append(v / np.linalg.norm(v))
    return np.vstack(rows)


@pytest.mark.parametrize("seed", [0, 1, 2])
@pytest.mark.parametrize("epsilon,min_points", [(0.2, 4), (0.4, 5)])
def test_clustering_agrees_with_reference(seed, epsilon, min_points):
    vectors = _blob_instance(seed)
    dists = oracles.pairwise_cosine_distances(vectors)
    assert min(abs(d - epsilon) for d in dists) > 1e-9, "instance too close to the boundary"

    expected = oracles.dbscan_reference(vectors, epsilon, min_points)
    config = im.MiningConfig(mode="specific", epsilon=epsilon, min_points=min_points, top_k=100)
    clusters = im.cluster(queries_at(list(vectors)), config)

    actual = [-1] * len(vectors)
    for c in clusters:
        for m in c.members:
            actual[int(m.query.text[1:])] = c.id
    assert actual == expected


# -- effectiveness -----------------------------------------------------------------------


def _cluster_with(pairs, centroid):
    members = [
        im.ClusterMember(
            query=RawQuery(text=f"m{i}", weight=w), distance_to_centroid=d, weight=w
        )
        for i, (d, w) in enumerate(pairs)
    ]
    return im.Cluster(id=0, members=members, centroid=centroid)


def test_specific_effectiveness_frozen_value():
    c = _cluster_with([(0.1, 5.0), (0.3, 2.0)], unit(0))
    assert im.effectiveness_specific(c) == pytest.approx(5.9, abs=1e-12)
    assert oracles.effectiveness_reference([(0.1, 5.0), (0.3, 2.0)]) == pytest.approx(5.9, abs=1e-12)


def test_generic_effectiveness_frozen_value():
    c = _cluster_with([(0.1, 5.0), (0.3, 2.0)], unit(0))
    other = rotated(np.arccos(0.5))  # cosine 0.5 away, so dc_min = 0.5
    value = im.effectiveness_generic(c, [c.centroid, other])
    assert value == pytest.approx(1.475, abs=1e-9)


def test_generic_effectiveness_takes_nearest_neighbour():
    c = _cluster_with([(0.0, 1.0)], unit(0))
    near = rotated(np.arccos(0.8))
    far = unit(5)
    value = im.effectiveness_generic(c, [c.centroid, far, near])
    assert value == pytest.approx(0.2 * 0.2 * 1.0, abs=1e-9)


def test_generic_effectiveness_requires_other_clusters():
    c = _cluster_with([(0.0, 1.0)], unit(0))
    with pytest.raises(ValueError):
        im.effectiveness_generic(c, [c.centroid])


def test_effectiveness_weighs_traffic(embed):
    rng = np.random.default_rng(4)
    pairs = [(float(rng.uniform(0, 0.5)), float(rng.uniform(0.5, 10))) for _ in range(30)]
    c = _cluster_with(pairs, unit(0))
    assert im.effectiveness_specific(c) == pytest.approx(
        oracles.effectiveness_reference(pairs), abs=1e-9
    )


# -- batches -----------------------------------------------------------------------------


def _small_batch(top_k=10, mode="specific"):
    vectors = [unit(0)] * 4 + [unit(1)] * 3 + [unit(2)] * 3
    weights = [5.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 1.0, 1.0, 1.0]
    rows = [
        (RawQuery(text=f"q{i:04d}", weight=w), v)
        for i, (v, w) in enumerate(zip(vectors, weights))
    ]
    config = im.MiningConfig(mode=mode, epsilon=0.2, min_points=3, top_k=top_k)
    return im.rank_and_export(im.cluster(rows, config), config), config


def test_batch_ranked_by_effectiveness():
    batch, _ = _small_batch()
    effs = [c.effectiveness for c in batch.clusters]
    assert effs == sorted(effs, reverse=True)
    assert batch.clusters[0].total_weight == 8.0


def test_batch_top_k_truncates():
    batch, _ = _small_batch(top_k=2)
    assert len(batch.clusters) == 2


def test_batch_id_is_content_addressed():
    a, _ = _small_batch()
    b, _ = _small_batch()
    assert a.id == b.id
    assert a.id.startswith("specific-")
    assert len(a.id.split("-", 1)[1]) == 12
    c, _ = _small_batch(top_k=2)
    assert c.id != a.id


def test_batch_members_sorted_and_sampled():
    batch, _ = _small_batch()
    for c in batch.clusters:
        keys = [(d, t) for t, _w, d in c.members]
        assert keys == sorted(keys)
        assert c.samples == c.members[: im.MAX_SAMPLES_PER_CLUSTER]


def test_batch_roundtrip(tmp_path):
    batch, _ = _small_batch()
    path = tmp_path / "batch.json"
    batch.save(path)
    loaded = im.AnnotationBatch.load(path)
    assert loaded == batch


def test_batch_rejects_unknown_schema(tmp_path):
    batch, _ = _small_batch()
    doc = batch.to_json()
    doc["schema_version"] = 99
    with pytest.raises(ValueError):
        im.AnnotationBatch.from_json(doc)


def test_generic_batch_uses_dampened_scores():
    batch, _ = _small_batch(mode="generic")
    plain, _ = _small_batch(mode="specific")
    by_id = {c.id: c.effectiveness for c in plain.clusters}
    for c in batch.clusters:
        # centroids here are orthogonal, so dc_min = 1 and scores coincide
        assert c.effectiveness == pytest.approx(by_id[c.id], abs=1e-9)


# -- decisions ----------------------------------------------------------------------------


def test_decision_validation():
    im.AnnotationDecision(cluster_id=1, action="choose", intent_name="Greeting")
    im.AnnotationDecision(cluster_id=1, action="reject", reason="junk")
    im.AnnotationDecision(cluster_id=1, action="merge", merge_target=2)
    with pytest.raises(ValueError):
        im.AnnotationDecision(cluster_id=1, action="choose", intent_name="  ")
    with pytest.raises(ValueError):
        im.AnnotationDecision(cluster_id=1, action="reject")
    with pytest.raises(ValueError):
        im.AnnotationDecision(cluster_id=1, action="merge", merge_target=1)
    with pytest.raises(ValueError):
        im.AnnotationDecision(cluster_id=1, action="promote")


def test_decision_json_roundtrip():
    d = im.AnnotationDecision(cluster_id=3, action="merge", merge_target=1)
    assert im.AnnotationDecision.from_json(d.to_json()) == d


def test_slugify():
    assert im.slugify_intent_name("Good Morning!") == "good_morning"
    assert im.slugify_intent_name("  What's Up  ") == "what_s_up"
    with pytest.raises(ValueError):
        im.slugify_intent_name("!!!")


# -- applying decisions ----------------------------------------------------------------------


def _decided(batch, stopwords, semantic):
    ids = batch.cluster_ids()
    decisions = [
        im.AnnotationDecision(cluster_id=ids[0], action="choose", intent_name="Greeting"),
        im.AnnotationDecision(cluster_id=ids[1], action="merge", merge_target=ids[0]),
        im.AnnotationDecision(cluster_id=ids[2], action="reject", reason="not an intent"),
    ]
    return im.apply_annotations(batch, decisions, semantic, stopwords)


def test_apply_produces_intent_with_merged_members(stopwords, semantic):
    batch, _ = _small_batch()
    intents, audit = _decided(batch, stopwords, semantic)
    assert len(intents) == 1
    intent = intents[0]
    assert intent.id == "greeting"
    assert intent.friendly_name == "Greeting"
    assert intent.kind == "specific"
    merged_sizes = len(batch.clusters[0].members) + len(batch.clusters[1].members)
    assert len(intent.curated_queries) == merged_sizes
    assert intent.provenance["batch_id"] == batch.id
    assert intent.provenance["merged_from"] == [batch.cluster_ids()[1]]


def test_apply_audit_records_every_decision(stopwords, semantic):
    batch, _ = _small_batch()
    ids = batch.cluster_ids()
    _, audit = _decided(batch, stopwords, semantic)
    assert audit.batch_id == batch.id
    assert audit.chosen == ((ids[0], "greeting"),)
    assert audit.merged == ((ids[1], ids[0]),)
    assert audit.rejected == ((ids[2], "not an intent"),)


def test_apply_requires_decisions_for_every_cluster(stopwords, semantic):
    batch, _ = _small_batch()
    ids = batch.cluster_ids()
    with pytest.raises(ValueError, match="missing decisions"):
        im.apply_annotations(
            batch,
            [im.AnnotationDecision(cluster_id=ids[0], action="choose", intent_name="x")],
            semantic,
            stopwords,
        )


def test_apply_rejects_duplicate_and_unknown_decisions(stopwords, semantic):
    batch, _ = _small_batch()
    ids = batch.cluster_ids()
    dup = [
        im.AnnotationDecision(cluster_id=ids[0], action="choose", intent_name="x"),
        im.AnnotationDecision(cluster_id=ids[0], action="reject", reason="r"),
    ]
    with pytest.raises(ValueError, match="duplicate decision"):
        im.apply_annotations(batch, dup, semantic, stopwords)
    with pytest.raises(ValueError, match="unknown cluster"):
        im.apply_annotations(
            batch,
            [im.AnnotationDecision(cluster_id=999, action="reject", reason="r")],
            semantic,
            stopwords,
        )


def test_apply_merge_must_target_chosen_cluster(stopwords, semantic):
    batch, _ = _small_batch()
    ids = batch.cluster_ids()
    decisions = [
        im.AnnotationDecision(cluster_id=ids[0], action="reject", reason="r"),
        im.AnnotationDecision(cluster_id=ids[1], action="merge", merge_target=ids[0]),
        im.AnnotationDecision(cluster_id=ids[2], action="reject", reason="r"),
    ]
    with pytest.raises(ValueError, match="not a chosen cluster"):
        im.apply_annotations(batch, decisions, semantic, stopwords)


def test_apply_rejects_duplicate_intent_names(stopwords, semantic):
    batch, _ = _small_batch()
    ids = batch.cluster_ids()
    decisions = [
        im.AnnotationDecision(cluster_id=ids[0], action="choose", intent_name="Greeting"),
        im.AnnotationDecision(cluster_id=ids[1], action="choose", intent_name="greeting!"),
        im.AnnotationDecision(cluster_id=ids[2], action="reject", reason="r"),
    ]
    with pytest.raises(ValueError, match="duplicate intent id"):
        im.apply_annotations(batch, decisions, semantic, stopwords)
