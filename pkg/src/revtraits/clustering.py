"""Archetype discovery: z-standardization, Lloyd's K-means, elbow selection.

K-means uses plus-plus seeding with an explicit seed so every run is
reproducible; the within-cluster sum of squares is asserted non-increasing
across Lloyd iterations. The elbow rule is the maximal discrete second
difference of the best-of-seeds WCSS curve, with a flatness-based
confidence flag since a curvature maximum always exists even on
structureless data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, StatsError

# archetype names ordered by descending mean standardized trait score
ARCHETYPE_LABELS = (
    "Well-Rounded Excellent",
    "Steady Reliable",
    "Socially Driven",
    "Underperforming",
)


@dataclass(frozen=True)
class ZScoreResult:
    data: np.ndarray
    means: np.ndarray
    sds: np.ndarray
    row_index: np.ndarray  # original row positions of the retained rows


def zscore(matrix) -> ZScoreResult:
    """Standardize columns to mean 0 / sd 1 over listwise-complete rows."""
    data = np.asarray(matrix, dtype=float)
    if data.ndim != 2:
        raise ArgumentError("matrix must be 2-dimensional")
    complete = ~np.isnan(data).any(axis=1)
    kept = data[complete]
    if kept.shape[0] < 2:
        raise StatsError("fewer than 2 complete rows", code="E_EMPTY")
    means = kept.mean(axis=0)
    sds = kept.std(axis=0, ddof=1)
    zero = np.flatnonzero(sds == 0.0)
    if zero.size:
        raise StatsError(
            f"zero-variance column(s): {', '.join(map(str, zero.tolist()))}",
            code="E_DEGENERATE",
            columns=zero.tolist(),
        )
    return ZScoreResult(
        data=(kept - means) / sds,
        means=means,
        sds=sds,
        row_index=np.flatnonzero(complete),
    )


@dataclass
class ClusterResult:
    k: int
    assignments: np.ndarray
    centroids: np.ndarray
    wcss: float
    iterations: int
    converged: bool


def _squared_distances(data: np.ndarray, centroids: np.ndarray,
                       row_norms: np.ndarray | None = None) -> np.ndarray:
    # (n, k) squared euclidean distances via the expansion |x|^2 - 2x.c + |c|^2,
    # which runs on BLAS instead of materializing an (n, k, d) broadcast
    if row_norms is None:
        row_norms = (data * data).sum(axis=1)
    d2 = (
        row_norms[:, None]
        - 2.0 * (data @ centroids.T)
        + (centroids * centroids).sum(axis=1)[None, :]
    )
    return np.maximum(d2, 0.0)


def _mean_by_cluster(data: np.ndarray, assignments: np.ndarray, k: int,
                     fallback: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    counts = np.bincount(assignments, minlength=k).astype(float)
    sums = np.empty((k, data.shape[1]))
    for j in range(data.shape[1]):
        sums[:, j] = np.bincount(assignments, weights=data[:, j], minlength=k)
    occupied = counts > 0
    means = fallback.copy()
    means[occupied] = sums[occupied] / counts[occupied, None]
    return means, occupied


def _plus_plus_init(data: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = data.shape[0]
    centroids = np.empty((k, data.shape[1]))
    centroids[0] = data[rng.integers(n)]
    closest = ((data - centroids[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = closest.sum()
        if total == 0.0:
            centroids[i] = data[rng.integers(n)]
            continue
        probs = closest / total
        centroids[i] = data[rng.choice(n, p=probs)]
        closest = np.minimum(closest, ((data - centroids[i]) ** 2).sum(axis=1))
    return centroids


def _wcss_of(data: np.ndarray, centroids: np.ndarray, assignments: np.ndarray) -> float:
    return float(((data - centroids[assignments]) ** 2).sum())


def kmeans(data, k: int, seed: int, max_iter: int = 300, tol: float = 1e-6) -> ClusterResult:
    """Lloyd iterations from k-means++ seeding; deterministic for a fixed seed."""
    data = np.asarray(data, dtype=float)
    if data.ndim != 2:
        raise ArgumentError("data must be 2-dimensional")
    n = data.shape[0]
    if k < 1:
        raise ArgumentError("k must be >= 1")
    if k > n:
        raise ArgumentError(f"k ({k}) exceeds number of rows ({n})")

    rng = np.random.default_rng(seed)
    n = data.shape[0]
    row_norms = (data * data).sum(axis=1)
    centroids = _plus_plus_init(data, k, rng)
    assignments = None
    prev_wcss = math.inf
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        distances = _squared_distances(data, centroids, row_norms)
        new_assignments = np.argmin(distances, axis=1)
        wcss = float(distances[np.arange(n), new_assignments].sum())
        # Lloyd's objective never increases; each step is checked
        assert wcss <= prev_wcss + 1e-9 * max(1.0, wcss), (
            f"WCSS increased across Lloyd iteration: {prev_wcss} -> {wcss}"
        )
        if assignments is not None and np.array_equal(new_assignments, assignments):
            assignments = new_assignments
            prev_wcss = wcss
            converged = True
            break
        assignments = new_assignments
        prev_wcss = wcss
        new_centroids, occupied = _mean_by_cluster(data, assignments, k, centroids)
        if not occupied.all():
            # re-seed each empty cluster to the point farthest from any centroid
            for c in np.flatnonzero(~occupied):
                nearest = _squared_distances(data, new_centroids, row_norms).min(axis=1)
                new_centroids[c] = data[int(np.argmax(nearest))]
        shift = float(np.sqrt(((new_centroids - centroids) ** 2).sum(axis=1)).max())
        centroids = new_centroids
        if shift < tol:
            # final reassignment against the settled centroids
            distances = _squared_distances(data, centroids, row_norms)
            assignments = np.argmin(distances, axis=1)
            wcss = float(distances[np.arange(n), assignments].sum())
            assert wcss <= prev_wcss + 1e-9 * max(1.0, wcss)
            prev_wcss = wcss
            converged = True
            break
    return ClusterResult(
        k=k,
        assignments=assignments,
        centroids=centroids,
        wcss=prev_wcss,
        iterations=iterations,
        converged=converged,
    )


@dataclass(frozen=True)
class ElbowResult:
    wcss_curve: dict[int, float]
    selected_k: int
    confident: bool
    best_seed: dict[int, int]


# fraction of the curve's total drop allowed to remain after the selected k
# before the selection is flagged low-confidence
_FLATNESS_THRESHOLD = 0.25


def elbow(data, k_min: int = 1, k_max: int = 10,
          seeds: tuple[int, ...] = (0, 1, 2)) -> ElbowResult:
    """Best-of-seeds WCSS curve with second-difference elbow selection."""
    data = np.asarray(data, dtype=float)
    if k_max - k_min < 2:
        raise ArgumentError("k_max - k_min must be >= 2 to locate an elbow")
    if k_max > data.shape[0]:
        raise ArgumentError(f"k_max ({k_max}) exceeds number of rows ({data.shape[0]})")
    if not seeds:
        raise ArgumentError("need at least one seed")
    curve: dict[int, float] = {}
    best_seed: dict[int, int] = {}
    for k in range(k_min, k_max + 1):
        best = None
        for seed in seeds:
            result = kmeans(data, k, seed=seed)
            if best is None or result.wcss < best[0]:
                best = (result.wcss, seed)
        curve[k] = best[0]
        best_seed[k] = best[1]

    second_diff = {
        k: curve[k - 1] - 2.0 * curve[k] + curve[k + 1]
        for k in range(k_min + 1, k_max)
    }
    selected_k = max(second_diff, key=second_diff.get)
    total_drop = curve[k_min] - curve[k_max]
    remaining = curve[selected_k] - curve[k_max]
    confident = bool(total_drop > 0.0 and remaining <= _FLATNESS_THRESHOLD * total_drop)
    return ElbowResult(wcss_curve=curve, selected_k=selected_k,
                       confident=confident, best_seed=best_seed)


def archetype_names(result: ClusterResult) -> dict[int, str]:
    """Cosmetic archetype labels, ordered by mean standardized score per cluster.

    Only the four-cluster solution gets the named archetypes; other k values
    fall back to generic names.
    """
    order = np.argsort([-result.centroids[c].mean() for c in range(result.k)])
    if result.k == len(ARCHETYPE_LABELS):
        return {int(order[i]): ARCHETYPE_LABELS[i] for i in range(result.k)}
    return {int(order[i]): f"Cluster {i + 1}" for i in range(result.k)}
