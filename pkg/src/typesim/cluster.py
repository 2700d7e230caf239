"""Type-cluster index: k-nearest-neighbour type prediction over encodings.

Each training datapoint contributes one (vector, canonical type) point.
A query's score for type t' sums 1 / (d_i + eps)^2 over its k nearest
neighbours of that type (eps = 1e-10); scores are normalized into
probabilities, which cannot change the ranking but makes confidences
comparable across queries (normalization is recorded in the metadata).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .errors import IndexBuildError
from .neighbors import ExactNearestNeighbors, RandomProjectionForest, make_index

EPSILON = 1e-10
DEFAULT_K = 10


@dataclass
class Prediction:
    """Ranked (type, probability) candidates for one query."""

    ranked: list[tuple[str, float]]
    kind: str = ""
    metadata: dict = field(default_factory=dict)

    def top_n(self, n: int) -> list[tuple[str, float]]:
        return self.ranked[: max(n, 0)]

    @property
    def top_type(self) -> Optional[str]:
        return self.ranked[0][0] if self.ranked else None

    def to_dict(self) -> dict:
        return {
            "ranked": [[t, p] for t, p in self.ranked],
            "kind": self.kind,
            "metadata": self.metadata,
        }


def top_n(prediction: Prediction, n: int) -> list[tuple[str, float]]:
    return prediction.top_n(n)


def scores_from_neighbors(
    labels: Sequence[str], distances: np.ndarray, epsilon: float = EPSILON
) -> dict[str, float]:
    """Raw per-type scores: sum of inverse squared (distance + epsilon)."""
    scores: dict[str, float] = {}
    for label, dist in zip(labels, distances):
        scores[label] = scores.get(label, 0.0) + 1.0 / (float(dist) + epsilon) ** 2
    return scores


def rank_scores(scores: dict[str, float]) -> list[tuple[str, float]]:
    """Normalize to probabilities, sorted by descending probability with
    lexicographic tie-breaking."""
    total = sum(scores.values())
    if total <= 0.0:
        return []
    return sorted(
        ((t, s / total) for t, s in scores.items()), key=lambda kv: (-kv[1], kv[0])
    )


class TypeClusterIndex:
    """Immutable set of (vector, type) points answering k-NN type queries."""

    def __init__(
        self,
        vectors: np.ndarray,
        labels: Sequence[str],
        backend: str = "exact",
        n_trees: int = 16,
        leaf_size: int = 32,
        seed: int = 0,
        epsilon: float = EPSILON,
    ):
        vectors = np.asarray(vectors, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[0] == 0:
            raise IndexBuildError("index needs a non-empty 2-D vector set")
        if len(labels) != vectors.shape[0]:
            raise IndexBuildError("labels must align with vectors")
        self.vectors = vectors
        self.labels = [str(l) for l in labels]
        self.backend = backend
        self.epsilon = epsilon
        self._params = {"n_trees": n_trees, "leaf_size": leaf_size, "seed": seed}
        self._search = make_index(backend, n_trees, leaf_size, seed).fit(vectors)

    def __len__(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def kneighbors(self, queries: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
        return self._search.kneighbors(queries, k)

    def predict(self, query: np.ndarray, k: int = DEFAULT_K, kind: str = "") -> Prediction:
        return self.predict_batch(np.asarray(query)[None, :], k=k, kinds=[kind])[0]

    def predict_batch(
        self, queries: np.ndarray, k: int = DEFAULT_K, kinds: Optional[Sequence[str]] = None
    ) -> list[Prediction]:
        queries = np.asarray(queries, dtype=np.float64)
        k = min(max(int(k), 1), len(self))
        dists, idxs = self.kneighbors(queries, k)
        predictions = []
        for row in range(queries.shape[0]):
            neighbor_labels = [self.labels[i] for i in idxs[row]]
            scores = scores_from_neighbors(neighbor_labels, dists[row], self.epsilon)
            predictions.append(
                Prediction(
                    ranked=rank_scores(scores),
                    kind=kinds[row] if kinds else "",
                    metadata={
                        "k": k,
                        "backend": self.backend,
                        "scores_normalized": True,
                    },
                )
            )
        return predictions

    # ----- persistence ------------------------------------------------------

    def save(self, vectors_path: str | Path, labels_path: str | Path, manifest_path: str | Path) -> None:
        self.vectors.astype("<f4").tofile(vectors_path)
        with open(labels_path, "w", encoding="utf-8") as fh:
            for label in self.labels:
                fh.write(json.dumps({"type": label}, sort_keys=True) + "\n")
        manifest = {
            "count": len(self),
            "dim": self.dim,
            "backend": self.backend,
            "epsilon": self.epsilon,
            "dtype": "<f4",
            **self._params,
        }
        Path(manifest_path).write_text(
            json.dumps(manifest, sort_keys=True, indent=1), encoding="utf-8"
        )

    @classmethod
    def load(
        cls, vectors_path: str | Path, labels_path: str | Path, manifest_path: str | Path
    ) -> "TypeClusterIndex":
        manifest = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
        vectors = np.fromfile(vectors_path, dtype="<f4").astype(np.float64)
        vectors = vectors.reshape(manifest["count"], manifest["dim"])
        labels = []
        with open(labels_path, "r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    labels.append(json.loads(line)["type"])
        return cls(
            vectors,
            labels,
            backend=manifest["backend"],
            n_trees=manifest["n_trees"],
            leaf_size=manifest["leaf_size"],
            seed=manifest["seed"],
            epsilon=manifest["epsilon"],
        )


def build_index(
    vectors: np.ndarray,
    labels: Sequence[str],
    backend: str = "exact",
    n_trees: int = 16,
    leaf_size: int = 32,
    seed: int = 0,
) -> TypeClusterIndex:
    return TypeClusterIndex(
        vectors, labels, backend=backend, n_trees=n_trees, leaf_size=leaf_size, seed=seed
    )


def predict(index: TypeClusterIndex, query: np.ndarray, k: int = DEFAULT_K) -> Prediction:
    return index.predict(query, k=k)


class KnnTypePredictor(BaseEstimator):
    """Estimator facade over the index: fit(vectors, types) then predict."""

    def __init__(
        self,
        k: int = DEFAULT_K,
        backend: str = "exact",
        n_trees: int = 16,
        leaf_size: int = 32,
        seed: int = 0,
    ):
        self.k = k
        self.backend = backend
        self.n_trees = n_trees
        self.leaf_size = leaf_size
        self.seed = seed

    def fit(self, X, y) -> "KnnTypePredictor":
        self.index_ = build_index(
            X, y, backend=self.backend, n_trees=self.n_trees,
            leaf_size=self.leaf_size, seed=self.seed,
        )
        return self

    def predict_ranked(self, X) -> list[Prediction]:
        return self.index_.predict_batch(np.asarray(X), k=self.k)

    def predict(self, X) -> list[Optional[str]]:
        return [p.top_type for p in self.predict_ranked(X)]
