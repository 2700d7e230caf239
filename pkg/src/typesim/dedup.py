"""Near-duplicate source file detection.

Files become TF-IDF vectors over code tokens; candidate pairs come from
k-nearest-neighbour search; pairs at or above the similarity threshold are
duplicate edges and connected components form duplicate clusters, of which
exactly one file is kept. The duplicate criterion is cosine similarity
>= t (equivalently cosine distance <= 1 - t).
"""

from __future__ import annotations

import io
import json
import re
import tokenize
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .extraction import tokenize_identifier
from .neighbors import ExactNearestNeighbors, RandomProjectionForest

DEFAULT_DIM = 4096
DEFAULT_K = 5
DEFAULT_THRESHOLD = 0.95
EXACT_BACKEND_LIMIT = 10_000


def code_terms(source_text: str) -> list[str]:
    """Bag-of-terms for one file: identifiers (plus their subtokens),
    keywords and literals; comments and punctuation are dropped."""
    terms: list[str] = []
    try:
        for tok in tokenize.generate_tokens(io.StringIO(source_text).readline):
            if tok.type == tokenize.NAME:
                terms.append(tok.string)
                sub = tokenize_identifier(tok.string)
                if sub != [tok.string]:
                    terms.extend(sub)
            elif tok.type in (tokenize.NUMBER, tokenize.STRING):
                terms.append(tok.string)
    except (tokenize.TokenError, IndentationError, SyntaxError):
        terms = re.findall(r"[A-Za-z_][A-Za-z0-9_]*|\d+", source_text)
    return terms


class TfidfCodeVectorizer(BaseEstimator):
    """TF-IDF vectors over code terms, capped to the `dim` terms with the
    highest document frequency (ties lexicographic), L2-normalized.

    idf(term) = ln(N / (1 + df)) + 1.
    """

    def __init__(self, dim: int = DEFAULT_DIM):
        self.dim = dim

    def fit(self, texts: Sequence[str]) -> "TfidfCodeVectorizer":
        df: dict[str, int] = {}
        self._term_lists = [code_terms(t) for t in texts]
        for terms in self._term_lists:
            for term in set(terms):
                df[term] = df.get(term, 0) + 1
        ranked = sorted(df.items(), key=lambda kv: (-kv[1], kv[0]))[: self.dim]
        self.vocabulary_ = {term: i for i, (term, _) in enumerate(ranked)}
        n_docs = max(len(texts), 1)
        self.idf_ = np.zeros(len(self.vocabulary_))
        for term, i in self.vocabulary_.items():
            self.idf_[i] = np.log(n_docs / (1.0 + df[term])) + 1.0
        return self

    def transform(self, texts: Optional[Sequence[str]] = None) -> np.ndarray:
        term_lists = (
            self._term_lists if texts is None else [code_terms(t) for t in texts]
        )
        vectors = np.zeros((len(term_lists), len(self.vocabulary_)))
        for row, terms in enumerate(term_lists):
            for term in terms:
                idx = self.vocabulary_.get(term)
                if idx is not None:
                    vectors[row, idx] += 1.0
        vectors *= self.idf_[None, :]
        norms = np.linalg.norm(vectors, axis=1)
        nonzero = norms > 0
        vectors[nonzero] /= norms[nonzero, None]
        return vectors

    def fit_transform(self, texts: Sequence[str]) -> np.ndarray:
        return self.fit(texts).transform()


@dataclass
class DuplicateClusters:
    """Partition of the near-duplicate graph; one kept file per cluster."""

    clusters: list[list[str]]
    kept: list[str]
    excluded_empty: list[str] = field(default_factory=list)

    @property
    def non_singleton(self) -> list[list[str]]:
        return [c for c in self.clusters if len(c) > 1]

    def kept_files(self) -> list[str]:
        return sorted(self.kept + self.excluded_empty)

    def to_dict(self) -> dict:
        return {
            "clusters": self.clusters,
            "kept": self.kept,
            "excluded_empty": self.excluded_empty,
        }


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


class NearDuplicateDetector(BaseEstimator):
    """Find and cluster near-duplicate files.

    backend 'auto' uses exact all-pairs search up to `exact_limit` files and
    the random-projection forest beyond; 'exact'/'approx' force a backend.
    Similarity is transitive: thresholded pairs are edges and connected
    components are clusters.
    """

    def __init__(
        self,
        dim: int = DEFAULT_DIM,
        k: int = DEFAULT_K,
        threshold: float = DEFAULT_THRESHOLD,
        backend: str = "auto",
        exact_limit: int = EXACT_BACKEND_LIMIT,
        n_trees: int = 16,
        leaf_size: int = 32,
        seed: int = 0,
    ):
        self.dim = dim
        self.k = k
        self.threshold = threshold
        self.backend = backend
        self.exact_limit = exact_limit
        self.n_trees = n_trees
        self.leaf_size = leaf_size
        self.seed = seed

    def _resolve_backend(self, n: int) -> str:
        if self.backend != "auto":
            return self.backend
        return "exact" if n <= self.exact_limit else "approx"

    def _duplicate_edges_exact(self, vectors: np.ndarray) -> list[tuple[int, int]]:
        edges = []
        chunk = 256
        for start in range(0, len(vectors), chunk):
            block = vectors[start : start + chunk]
            sims = block @ vectors.T
            for bi in range(len(block)):
                i = start + bi
                js = np.nonzero(sims[bi] >= self.threshold)[0]
                edges.extend((i, int(j)) for j in js if j > i)
        return edges

    def _duplicate_edges_approx(self, vectors: np.ndarray) -> list[tuple[int, int]]:
        forest = RandomProjectionForest(
            n_trees=self.n_trees, leaf_size=self.leaf_size, seed=self.seed
        ).fit(vectors)
        # L2-normalized vectors: cosine sim >= t <=> distance <= sqrt(2(1-t)).
        max_dist = np.sqrt(max(2.0 * (1.0 - self.threshold), 0.0))
        edges = []
        dists, idxs = forest.kneighbors(vectors, k=self.k + 1)
        for i in range(len(vectors)):
            for dist, j in zip(dists[i], idxs[i]):
                if j != i and dist <= max_dist + 1e-12:
                    edges.append((min(i, int(j)), max(i, int(j))))
        return edges

    def fit(self, texts: Sequence[str], file_ids: Sequence[str]) -> "NearDuplicateDetector":
        if len(texts) != len(file_ids):
            raise ValueError("texts and file_ids must align")
        vectorizer = TfidfCodeVectorizer(dim=self.dim)
        vectors = vectorizer.fit_transform(texts)
        norms = np.linalg.norm(vectors, axis=1)

        # Zero-token files never participate in dedup and are always kept.
        active = [i for i in range(len(texts)) if norms[i] > 0]
        excluded = sorted(file_ids[i] for i in range(len(texts)) if norms[i] == 0)

        order = sorted(active, key=lambda i: file_ids[i])
        sub = vectors[order]
        if len(order) > 0:
            backend = self._resolve_backend(len(order))
            if backend == "exact":
                edges = self._duplicate_edges_exact(sub)
            else:
                edges = self._duplicate_edges_approx(sub)
        else:
            backend, edges = "exact", []

        uf = _UnionFind(len(order))
        for a, b in edges:
            uf.union(a, b)
        groups: dict[int, list[str]] = {}
        for pos, orig in enumerate(order):
            groups.setdefault(uf.find(pos), []).append(str(file_ids[orig]))
        clusters = sorted(sorted(members) for members in groups.values())

        self.backend_used_ = backend
        self.vectorizer_ = vectorizer
        self.clusters_ = DuplicateClusters(
            clusters=clusters,
            kept=sorted(members[0] for members in clusters),
            excluded_empty=excluded,
        )
        return self

    def fit_predict(self, texts: Sequence[str], file_ids: Sequence[str]) -> DuplicateClusters:
        return self.fit(texts, file_ids).clusters_

    def report(self) -> dict:
        return {
            "criterion": "cosine_similarity >= t (cosine distance <= 1 - t)",
            "params": {
                "d": self.dim,
                "k": self.k,
                "t": self.threshold,
                "backend": self.backend_used_,
            },
            "n_clusters": len(self.clusters_.clusters),
            "n_duplicate_clusters": len(self.clusters_.non_singleton),
            "n_kept": len(self.clusters_.kept_files()),
            **self.clusters_.to_dict(),
        }


def dedup_files(
    corpus_root: str | Path,
    files: Iterable[Path],
    detector: Optional[NearDuplicateDetector] = None,
) -> tuple[DuplicateClusters, dict]:
    """Run dedup over corpus files, returning clusters and the JSON report."""
    root = Path(corpus_root)
    rels, texts = [], []
    for path in sorted(files):
        rel = path.relative_to(root) if path.is_absolute() else path
        rels.append(str(rel))
        texts.append((root / rel).read_text(encoding="utf-8"))
    detector = detector if detector is not None else NearDuplicateDetector()
    clusters = detector.fit_predict(texts, rels)
    return clusters, detector.report()


def save_report(report: dict, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(report, sort_keys=True, indent=1), encoding="utf-8"
    )
