"""K-means over relevance vectors, action-pure cluster sets and importance vectors."""

from __future__ import annotations

from collections.abc import Iterable

import numpy as np
from numpy.typing import ArrayLike, NDArray
from returns.maybe import Maybe, Nothing, Some
from sklearn.metrics import davies_bouldin_score, silhouette_score

from senn_rl.models import ClusterModel

MAX_ITERATIONS = 300


def squared_distances(points: NDArray[np.float64], centroids: NDArray[np.float64]) -> NDArray[np.float64]:
    diffs = points[:, None, :] - centroids[None, :, :]
    return np.einsum("ijk,ijk->ij", diffs, diffs)


def kmeans_plus_plus_init(points: NDArray[np.float64], k: int, rng: np.random.Generator) -> NDArray[np.float64]:
    """D^2-weighted seeding; falls back to uniform draws once every point is covered."""
    n = points.shape[0]
    chosen = [int(rng.integers(n))]
    closest = squared_distances(points, points[chosen]).min(axis=1)
    for _ in range(1, k):
        total = float(closest.sum())
        if total > 0.0:
            index = int(rng.choice(n, p=closest / total))
        else:
            index = int(rng.integers(n))
        chosen.append(index)
        closest = np.minimum(closest, squared_distances(points, points[[index]])[:, 0])
    return points[chosen].copy()


def lloyd(
    points: NDArray[np.float64], centroids: NDArray[np.float64], max_iterations: int = MAX_ITERATIONS
) -> tuple[NDArray[np.float64], NDArray[np.int64], int]:
    """Alternate assignment and mean updates until assignments stop changing.

    An empty cluster keeps its previous centroid.
    """
    centroids = centroids.copy()
    assignments = np.argmin(squared_distances(points, centroids), axis=1)
    iterations = 0
    for iterations in range(1, max_iterations + 1):
        for cluster in range(centroids.shape[0]):
            members = points[assignments == cluster]
            if members.shape[0]:
                centroids[cluster] = members.mean(axis=0)
        updated = np.argmin(squared_distances(points, centroids), axis=1)
        if np.array_equal(updated, assignments):
            break
        assignments = updated
    return centroids, assignments.astype(np.int64), iterations


def contingency_matrix(assignments: ArrayLike, labels: ArrayLike, k: int, n_labels: int) -> NDArray[np.int64]:
    """Counts of (cluster, label) pairs; row sums are the cluster sizes."""
    matrix = np.zeros((k, n_labels), dtype=np.int64)
    np.add.at(matrix, (np.asarray(assignments, dtype=np.int64), np.asarray(labels, dtype=np.int64)), 1)
    return matrix


def cluster_purity(contingency: NDArray[np.int64]) -> NDArray[np.float64]:
    """Majority-label share per cluster; empty clusters report 0."""
    sizes = contingency.sum(axis=1)
    return np.where(sizes > 0, contingency.max(axis=1) / np.maximum(sizes, 1), 0.0)


def kmeans(
    vectors: ArrayLike,
    k: int,
    seed: int,
    labels: ArrayLike | None = None,
    n_labels: int | None = None,
    silhouette_sample: int = 2_000,
    max_iterations: int = MAX_ITERATIONS,
) -> ClusterModel:
    """Cluster ``vectors`` with k-means++ seeding and Lloyd iterations.

    When ``labels`` (the chosen actions) are given, the contingency matrix and
    per-cluster purity are filled in. Silhouette is sampled on large inputs and
    is ``None`` whenever it is undefined (fewer than two distinct clusters).
    """
    points = np.asarray(vectors, dtype=np.float64)
    if points.ndim != 2:
        raise ValueError(f"kmeans expects a 2-D array, got shape {points.shape}")
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > points.shape[0]:
        raise ValueError(f"k={k} exceeds the dataset size {points.shape[0]}")

    rng = np.random.default_rng(seed)
    centroids, assignments, iterations = lloyd(points, kmeans_plus_plus_init(points, k, rng), max_iterations)
    distances = squared_distances(points, centroids)
    distortion = float(distances[np.arange(points.shape[0]), assignments].sum())

    model = ClusterModel(
        k=k,
        centroids=centroids,
        assignments=assignments,
        distortion=distortion,
        iterations=iterations,
    )
    distinct = np.unique(assignments).size
    if 2 <= distinct <= points.shape[0] - 1:
        sample = silhouette_sample if points.shape[0] > silhouette_sample else None
        model.silhouette = float(silhouette_score(points, assignments, sample_size=sample, random_state=seed))
        model.davies_bouldin = float(davies_bouldin_score(points, assignments))
    if labels is not None:
        label_array = np.asarray(labels, dtype=np.int64)
        width = n_labels if n_labels is not None else int(label_array.max()) + 1
        model.contingency = contingency_matrix(assignments, label_array, k, width)
        model.purity = cluster_purity(model.contingency)
    return model


def cluster_sets(contingency: ArrayLike, tau: float) -> dict[int, list[int]]:
    """Clusters dominated by one action.

    Cluster i joins C(a) iff a is the unique argmax of row i and
    ``M[i, a] > tau * sum(M[i])``. Tied or impure clusters join no set.
    """
    matrix = np.asarray(contingency)
    sets: dict[int, list[int]] = {action: [] for action in range(matrix.shape[1])}
    for cluster, row in enumerate(matrix):
        total = row.sum()
        if total <= 0:
            continue
        winners = np.flatnonzero(row == row.max())
        if winners.size != 1:
            continue
        action = int(winners[0])
        if row[action] > tau * total:
            sets[action].append(cluster)
    return sets


def importance(centroids: NDArray[np.float64], members: Iterable[int]) -> Maybe[NDArray[np.float64]]:
    """Mean centroid of a cluster set; ``Nothing`` for an empty set."""
    chosen = list(members)
    if not chosen:
        return Nothing
    return Some(centroids[chosen].mean(axis=0))


def attach_cluster_sets(model: ClusterModel, tau: float) -> ClusterModel:
    if model.contingency is None:
        raise ValueError("cluster sets need a contingency matrix; pass labels to kmeans")
    model.cluster_sets = cluster_sets(model.contingency, tau)
    model.importance = {
        action: importance(model.centroids, members).value_or(None)
        for action, members in model.cluster_sets.items()
    }
    return model


def k_sweep(
    vectors: ArrayLike,
    labels: ArrayLike,
    k_values: Iterable[int],
    seed: int,
    n_labels: int,
    silhouette_sample: int = 2_000,
) -> list[ClusterModel]:
    """Fit one model per k; values above the dataset size are skipped."""
    points = np.asarray(vectors, dtype=np.float64)
    return [
        kmeans(points, k, seed, labels=labels, n_labels=n_labels, silhouette_sample=silhouette_sample)
        for k in k_values
        if k <= points.shape[0]
    ]
