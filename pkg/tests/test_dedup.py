"""Tests for TF-IDF vectorization and near-duplicate clustering."""

import numpy as np
import pytest

from typesim.dedup import (
    NearDuplicateDetector,
    TfidfCodeVectorizer,
    code_terms,
)

FILE_A = "def compute_mean(values):\n    total = sum(values)\n    return total / len(values)\n"
FILE_B = "class Parser:\n    def parse(self, text):\n        return text.split()\n"
FILE_C = "import os\n\nBASE = os.path.dirname(__file__)\n"


def test_code_terms_include_subtokens_and_literals():
    terms = code_terms("rowTotal = get_count() + 42\n")
    assert "rowTotal" in terms
    assert "row" in terms and "total" in terms
    assert "get_count" in terms
    assert "42" in terms
    assert "+" not in terms


def test_code_terms_comments_stripped():
    terms = code_terms("x = 1  # secretcomment\n")
    assert "secretcomment" not in terms


def test_identical_files_identical_vectors():
    vecs = TfidfCodeVectorizer().fit_transform([FILE_A, FILE_A, FILE_B])
    assert np.allclose(vecs[0], vecs[1])
    assert np.isclose(vecs[0] @ vecs[1], 1.0)
    assert vecs[0] @ vecs[2] < 0.95


def test_vectors_l2_normalized_and_dim_capped():
    vec = TfidfCodeVectorizer(dim=5)
    out = vec.fit_transform([FILE_A, FILE_B, FILE_C])
    assert out.shape[1] <= 5
    norms = np.linalg.norm(out, axis=1)
    assert np.allclose(norms[norms > 0], 1.0)


def test_default_dim_is_4096():
    assert TfidfCodeVectorizer().dim == 4096
    assert NearDuplicateDetector().dim == 4096
    assert NearDuplicateDetector().k == 5
    assert NearDuplicateDetector().threshold == 0.95


def test_single_file_corpus():
    det = NearDuplicateDetector()
    clusters = det.fit_predict([FILE_A], ["a.py"])
    assert clusters.clusters == [["a.py"]]
    assert clusters.kept_files() == ["a.py"]


def _word(prefix, i):
    return prefix + chr(97 + i // 26) + chr(97 + i % 26)


def test_transitive_clustering():
    # A ~ B and B ~ C above threshold chains into one cluster even though
    # A ~ C alone falls below it.
    base = "\n".join(f"{_word('shared', i)} = {_word('value', i)}" for i in range(50))
    a = base + "\nalphaone = alphatwo\n"
    b = base + "\n"
    c = base + "\ngammaone = gammatwo\n"
    det = NearDuplicateDetector(backend="exact")
    clusters = det.fit_predict([a, b, c, FILE_B], ["a.py", "b.py", "c.py", "z.py"])
    vecs = det.vectorizer_.transform([a, b, c])
    assert vecs[0] @ vecs[1] >= 0.95 and vecs[1] @ vecs[2] >= 0.95
    assert vecs[0] @ vecs[2] < 0.95
    big = max(clusters.clusters, key=len)
    assert set(big) == {"a.py", "b.py", "c.py"}
    assert ["z.py"] in clusters.clusters


def test_ten_copies_plus_three_distinct():
    texts = [FILE_A] * 10 + [FILE_B, FILE_C, "def solo(q):\n    return q * q\n"]
    ids = [f"copy{i:02d}.py" for i in range(10)] + ["x.py", "y.py", "z.py"]
    clusters = NearDuplicateDetector().fit_predict(texts, ids)
    assert len(clusters.non_singleton) == 1
    assert len(clusters.non_singleton[0]) == 10
    assert len(clusters.kept_files()) == 4
    # Representative is the lexicographically smallest path.
    assert "copy00.py" in clusters.kept


def test_all_distinct_all_kept():
    texts = [FILE_A, FILE_B, FILE_C]
    ids = ["a.py", "b.py", "c.py"]
    clusters = NearDuplicateDetector().fit_predict(texts, ids)
    assert all(len(c) == 1 for c in clusters.clusters)
    assert clusters.kept_files() == ids


def test_empty_file_always_kept():
    clusters = NearDuplicateDetector().fit_predict(
        ["", "", FILE_A], ["e1.py", "e2.py", "a.py"]
    )
    assert set(clusters.excluded_empty) == {"e1.py", "e2.py"}
    assert set(clusters.kept_files()) == {"e1.py", "e2.py", "a.py"}


def test_dedup_idempotent():
    texts = [FILE_A, FILE_A, FILE_B]
    ids = ["a.py", "b.py", "c.py"]
    first = NearDuplicateDetector().fit_predict(texts, ids)
    kept = first.kept_files()
    texts2 = [texts[ids.index(f)] for f in kept]
    second = NearDuplicateDetector().fit_predict(texts2, kept)
    assert not second.non_singleton
    assert second.kept_files() == sorted(kept)


def test_kept_set_invariant_under_ordering():
    texts = [FILE_A, FILE_A, FILE_B, FILE_C]
    ids = ["a.py", "dup.py", "b.py", "c.py"]
    forward = NearDuplicateDetector().fit_predict(texts, ids)
    backward = NearDuplicateDetector().fit_predict(texts[::-1], ids[::-1])
    assert forward.kept_files() == backward.kept_files()
    assert forward.clusters == backward.clusters


def test_kept_count_monotone_in_threshold():
    a = FILE_A
    b = FILE_A.replace("compute_mean", "compute_avg")
    texts = [a, b, FILE_B]
    ids = ["a.py", "b.py", "c.py"]
    kept_counts = [
        len(NearDuplicateDetector(threshold=t).fit_predict(texts, ids).kept_files())
        for t in (0.5, 0.8, 0.95, 0.999)
    ]
    assert kept_counts == sorted(kept_counts)


def test_exact_and_approx_agree():
    rng = np.random.default_rng(7)
    base_texts = []
    for i in range(30):
        name = f"fn_{rng.integers(1e6)}"
        body = "\n".join(
            f"    v{j} = input_{rng.integers(1e6)} * {j}" for j in range(4)
        )
        base_texts.append(f"def {name}(arg):\n{body}\n    return v0\n")
    texts = base_texts + [base_texts[0], base_texts[3]]
    ids = [f"f{i:03d}.py" for i in range(len(texts))]
    exact = NearDuplicateDetector(backend="exact").fit_predict(texts, ids)
    approx = NearDuplicateDetector(backend="approx").fit_predict(texts, ids)
    assert exact.clusters == approx.clusters
    assert exact.kept_files() == approx.kept_files()


def test_sklearn_get_params_roundtrip():
    det = NearDuplicateDetector(threshold=0.9, k=3)
    params = det.get_params()
    assert params["threshold"] == 0.9
    clone = NearDuplicateDetector(**params)
    assert clone.get_params() == params
