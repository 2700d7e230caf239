"""Euclidean k-nearest-neighbour search: exact and random-projection forest.

The exact backend is the correctness oracle; the approximate backend is a
forest of random-projection trees whose leaf candidates are re-ranked
exactly, so its errors are misses only, never mis-ordered distances.
Ties in distance break by insertion order (stable).
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import IndexBuildError

DEFAULT_TREES = 16
DEFAULT_LEAF_SIZE = 32


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise ValueError(f"expected a 2-D array of vectors, got shape {X.shape}")
    return X


class ExactNearestNeighbors:
    """Brute-force Euclidean search with stable tie-breaking."""

    def __init__(self, chunk_size: int = 256):
        self.chunk_size = chunk_size

    def fit(self, X) -> "ExactNearestNeighbors":
        X = _as_matrix(X)
        if X.shape[0] == 0:
            raise IndexBuildError("cannot index an empty point set")
        self.points_ = X
        self._sq_norms = np.einsum("ij,ij->i", X, X)
        return self

    def kneighbors(self, queries, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Distances and indices of the k nearest points per query row."""
        queries = _as_matrix(queries)
        n = self.points_.shape[0]
        k = min(max(k, 1), n)
        dists = np.empty((queries.shape[0], k))
        idxs = np.empty((queries.shape[0], k), dtype=np.int64)
        for start in range(0, queries.shape[0], self.chunk_size):
            q = queries[start : start + self.chunk_size]
            sq = (
                np.einsum("ij,ij->i", q, q)[:, None]
                - 2.0 * (q @ self.points_.T)
                + self._sq_norms[None, :]
            )
            np.maximum(sq, 0.0, out=sq)
            order = np.argsort(sq, axis=1, kind="stable")[:, :k]
            dists[start : start + len(q)] = np.sqrt(
                np.take_along_axis(sq, order, axis=1)
            )
            idxs[start : start + len(q)] = order
        return dists, idxs


@dataclass
class _Node:
    direction: Optional[np.ndarray] = None
    threshold: float = 0.0
    left: Optional["_Node"] = None
    right: Optional["_Node"] = None
    indices: Optional[np.ndarray] = None  # leaf payload

    @property
    def is_leaf(self) -> bool:
        return self.indices is not None


@dataclass
class RandomProjectionForest:
    """Approximate index: forest of random-projection trees + exact re-rank.

    Queries run a best-first search over all trees ordered by hyperplane
    margin, visiting leaves until `search_k` candidates are collected
    (default n_trees * leaf_size), which are then re-ranked exactly.
    """

    n_trees: int = DEFAULT_TREES
    leaf_size: int = DEFAULT_LEAF_SIZE
    seed: int = 0
    search_k: Optional[int] = None
    _trees: list = field(default_factory=list, repr=False)

    def fit(self, X) -> "RandomProjectionForest":
        X = _as_matrix(X)
        if X.shape[0] == 0:
            raise IndexBuildError("cannot index an empty point set")
        self.points_ = X
        self._exact = ExactNearestNeighbors().fit(X)
        rng = np.random.default_rng(self.seed)
        all_idx = np.arange(X.shape[0])
        self._trees = [self._grow(all_idx, rng) for _ in range(self.n_trees)]
        return self

    def _grow(self, indices: np.ndarray, rng: np.random.Generator) -> _Node:
        if len(indices) <= self.leaf_size:
            return _Node(indices=indices)
        direction = rng.standard_normal(self.points_.shape[1])
        direction /= np.linalg.norm(direction) + 1e-12
        proj = self.points_[indices] @ direction
        threshold = float(np.median(proj))
        go_left = proj <= threshold
        # Degenerate split (e.g. duplicated points): stop here.
        if go_left.all() or not go_left.any():
            return _Node(indices=indices)
        return _Node(
            direction=direction,
            threshold=threshold,
            left=self._grow(indices[go_left], rng),
            right=self._grow(indices[~go_left], rng),
        )

    def candidates(self, query: np.ndarray) -> np.ndarray:
        """Sorted union of the best-first leaf members across all trees."""
        budget = (
            self.search_k
            if self.search_k is not None
            else self.n_trees * self.leaf_size
        )
        counter = 0
        heap = []
        for tree in self._trees:
            heap.append((0.0, counter, tree))
            counter += 1
        heapq.heapify(heap)
        parts = []
        collected = 0
        while heap and collected < budget:
            margin, _, node = heapq.heappop(heap)
            if node.is_leaf:
                parts.append(node.indices)
                collected += len(node.indices)
                continue
            gap = float(query @ node.direction - node.threshold)
            near, far = (node.left, node.right) if gap <= 0 else (node.right, node.left)
            heapq.heappush(heap, (margin, counter, near))
            counter += 1
            heapq.heappush(heap, (max(margin, abs(gap)), counter, far))
            counter += 1
        return np.unique(np.concatenate(parts))

    def kneighbors(self, queries, k: int) -> tuple[np.ndarray, np.ndarray]:
        queries = _as_matrix(queries)
        n = self.points_.shape[0]
        k = min(max(k, 1), n)
        dists = np.empty((queries.shape[0], k))
        idxs = np.empty((queries.shape[0], k), dtype=np.int64)
        for row, query in enumerate(queries):
            cand = self.candidates(query)
            if len(cand) < k:
                cand = np.arange(n)
            diff = self.points_[cand] - query[None, :]
            sq = np.einsum("ij,ij->i", diff, diff)
            order = np.argsort(sq, kind="stable")[:k]
            chosen = cand[order]
            dists[row] = np.sqrt(np.maximum(sq[order], 0.0))
            idxs[row] = chosen
        return dists, idxs


def make_index(
    backend: str, n_trees: int = DEFAULT_TREES, leaf_size: int = DEFAULT_LEAF_SIZE, seed: int = 0
):
    if backend == "exact":
        return ExactNearestNeighbors()
    if backend == "approx":
        return RandomProjectionForest(n_trees=n_trees, leaf_size=leaf_size, seed=seed)
    raise ValueError(f"unknown nearest-neighbour backend {backend!r}")
