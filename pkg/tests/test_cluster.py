"""Tests for the type-cluster index and distance-weighted KNN prediction."""

import numpy as np
import pytest

from typesim.cluster import (
    KnnTypePredictor,
    Prediction,
    TypeClusterIndex,
    build_index,
    rank_scores,
    scores_from_neighbors,
    top_n,
)
from typesim.errors import IndexBuildError


def brute_force_predict(vectors, labels, query, k, epsilon=1e-10):
    """Independent re-implementation used as the oracle."""
    dists = np.sqrt(((vectors - query[None, :]) ** 2).sum(axis=1))
    order = sorted(range(len(labels)), key=lambda i: (dists[i], i))[:k]
    scores = {}
    for i in order:
        scores[labels[i]] = scores.get(labels[i], 0.0) + 1.0 / (dists[i] + epsilon) ** 2
    total = sum(scores.values())
    return sorted(((t, s / total) for t, s in scores.items()), key=lambda kv: (-kv[1], kv[0]))


def test_worked_example():
    # neighbours [(int, d=1), (int, d=2), (str, d=3)]
    scores = scores_from_neighbors(["int", "int", "str"], np.array([1.0, 2.0, 3.0]))
    ranked = rank_scores(scores)
    assert ranked[0][0] == "int"
    assert ranked[0][1] == pytest.approx(0.9184, abs=1e-4)
    assert ranked[1][1] == pytest.approx(0.0816, abs=1e-4)
    assert sum(p for _, p in ranked) == pytest.approx(1.0, abs=1e-9)


def test_equal_distance_symmetry():
    scores = scores_from_neighbors(["int", "str"], np.array([1.0, 1.0]))
    ranked = rank_scores(scores)
    assert ranked[0][1] == pytest.approx(0.5) and ranked[1][1] == pytest.approx(0.5)
    # Tie broken lexicographically.
    assert [t for t, _ in ranked] == ["int", "str"]


def test_zero_distance_single_neighbor():
    index = build_index(np.array([[0.0, 0.0]]), ["float"])
    pred = index.predict(np.array([0.0, 0.0]), k=1)
    assert pred.ranked == [("float", 1.0)]


def test_self_retrieval():
    vectors = np.array([[0.0, 0.0], [3.0, 0.0], [0.0, 4.0]])
    index = build_index(vectors, ["a", "b", "c"])
    assert len(index) == 3
    dists, idxs = index.kneighbors(vectors[1][None, :], k=1)
    assert idxs[0, 0] == 1 and dists[0, 0] == 0.0


def test_duplicate_vectors_different_labels_both_stored():
    vectors = np.array([[1.0, 1.0], [1.0, 1.0]])
    index = build_index(vectors, ["int", "str"])
    pred = index.predict(np.array([1.0, 1.0]), k=2)
    assert dict(pred.ranked) == pytest.approx({"int": 0.5, "str": 0.5})


def test_empty_index_raises():
    with pytest.raises(IndexBuildError):
        build_index(np.empty((0, 4)), [])


def test_top_n_clipping():
    pred = Prediction(ranked=[("int", 0.9184), ("str", 0.0816)])
    assert top_n(pred, 1) == [("int", 0.9184)]
    assert top_n(pred, 10) == pred.ranked
    assert top_n(pred, 0) == []


def test_exact_matches_brute_force_oracle():
    rng = np.random.default_rng(0)
    vectors = rng.standard_normal((200, 16))
    labels = [f"T{i % 7}" for i in range(200)]
    index = build_index(vectors, labels, backend="exact")
    queries = rng.standard_normal((50, 16))
    preds = index.predict_batch(queries, k=10)
    for q, pred in zip(queries, preds):
        oracle = brute_force_predict(vectors, labels, q, k=10)
        assert [t for t, _ in pred.ranked] == [t for t, _ in oracle]
        for (t1, p1), (t2, p2) in zip(pred.ranked, oracle):
            assert abs(p1 - p2) <= 1e-12


def test_k_clipped_to_index_size():
    vectors = np.eye(3)
    index = build_index(vectors, ["a", "b", "c"])
    pred = index.predict(np.zeros(3), k=100)
    assert set(dict(pred.ranked)) == {"a", "b", "c"}


def test_increasing_k_never_removes_types():
    rng = np.random.default_rng(1)
    vectors = rng.standard_normal((60, 8))
    labels = [f"T{i % 5}" for i in range(60)]
    index = build_index(vectors, labels)
    query = rng.standard_normal(8)
    seen = set()
    for k in (1, 3, 5, 10, 30, 60):
        types = {t for t, _ in index.predict(query, k=k).ranked}
        assert seen <= types
        seen = types


def test_scale_invariance_of_ranking():
    rng = np.random.default_rng(2)
    vectors = rng.standard_normal((80, 8)) + 2.0
    labels = [f"T{i % 6}" for i in range(80)]
    query = rng.standard_normal(8)
    base = build_index(vectors, labels).predict(query, k=10)
    for c in (0.5, 2.0, 10.0):
        scaled = build_index(vectors * c, labels).predict(query * c, k=10)
        assert [t for t, _ in scaled.ranked] == [t for t, _ in base.ranked]


def test_approx_backend_top1_agreement():
    rng = np.random.default_rng(3)
    vectors = rng.standard_normal((500, 16))
    labels = [f"T{i % 9}" for i in range(500)]
    queries = rng.standard_normal((200, 16))
    exact = build_index(vectors, labels, backend="exact")
    approx = build_index(vectors, labels, backend="approx", seed=5)
    agree = 0
    for q in queries:
        if exact.predict(q, k=1).top_type == approx.predict(q, k=1).top_type:
            agree += 1
    assert agree / len(queries) >= 0.99


def test_index_roundtrip(tmp_path):
    rng = np.random.default_rng(4)
    vectors = rng.standard_normal((40, 8)).astype(np.float32).astype(np.float64)
    labels = [f"T{i % 4}" for i in range(40)]
    index = build_index(vectors, labels, backend="exact")
    index.save(tmp_path / "v.bin", tmp_path / "l.jsonl", tmp_path / "m.json")
    loaded = TypeClusterIndex.load(
        tmp_path / "v.bin", tmp_path / "l.jsonl", tmp_path / "m.json"
    )
    q = rng.standard_normal(8)
    assert loaded.predict(q, k=5).ranked == index.predict(q, k=5).ranked


def test_estimator_facade():
    vectors = np.array([[0.0, 0.0], [0.1, 0.0], [5.0, 5.0], [5.1, 5.0]])
    predictor = KnnTypePredictor(k=2).fit(vectors, ["int", "int", "str", "str"])
    assert predictor.predict(np.array([[0.05, 0.0], [5.05, 5.0]])) == ["int", "str"]
    assert predictor.get_params()["k"] == 2
