"""k-means++ seeded Lloyd iterations with restarts."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted


@dataclass
class KMeansResult:
    centroids: np.ndarray
    labels: np.ndarray
    inertia: float
    n_iter: int = 0


def _sqdist(points, centroids):
    diff = points[:, None, :] - centroids[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _plusplus(points, k, rng):
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]))
    centroids[0] = points[rng.integers(n)]
    closest = _sqdist(points, centroids[:1])[:, 0]
    for c in range(1, k):
        total = closest.sum()
        if total <= 0:
            # every point coincides with a chosen centroid
            idx = rng.integers(n)
        else:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centroids[c] = points[idx]
        closest = np.minimum(closest, _sqdist(points, centroids[c : c + 1])[:, 0])
    return centroids


def _means(points, labels, k):
    counts = np.bincount(labels, minlength=k)
    sums = np.zeros((k, points.shape[1]))
    np.add.at(sums, labels, points)
    return sums, counts


def _lloyd(points, centroids, max_iters):
    k = centroids.shape[0]
    labels = None
    n_iter = 0
    for n_iter in range(1, max_iters + 1):
        d = _sqdist(points, centroids)
        new_labels = np.argmin(d, axis=1)
        sums, counts = _means(points, new_labels, k)
        for j in np.flatnonzero(counts == 0):
            # move the worst-served point into the empty cluster
            own = d[np.arange(len(points)), new_labels]
            own[counts[new_labels] <= 1] = -1.0
            far = int(np.argmax(own))
            new_labels[far] = j
            sums, counts = _means(points, new_labels, k)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        centroids = sums / counts[:, None]
    sums, counts = _means(points, labels, k)
    centroids = sums / counts[:, None]
    inertia = float(np.sum((points - centroids[labels]) ** 2))
    return KMeansResult(centroids, labels, inertia, n_iter)


def kmeans_fit(points, k: int, restarts: int = 20, max_iters: int = 300, seed: int = 0) -> KMeansResult:
    """Best-of-``restarts`` k-means on the rows of ``points``.

    Ties in inertia keep the earliest restart.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] == 0:
        raise ValueError("k-means needs a non-empty 2-D array of points")
    n = points.shape[0]
    if k < 1 or n < k:
        raise ValueError(f"cannot form {k} clusters from {n} points")
    if restarts < 1 or max_iters < 1:
        raise ValueError("restarts and max_iters must be at least 1")
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(restarts)]
    best = None
    for rng in rngs:
        res = _lloyd(points, _plusplus(points, k, rng), max_iters)
        if best is None or res.inertia < best.inertia:
            best = res
    return best


class KMeans(ClusterMixin, TransformerMixin, BaseEstimator):
    """Estimator wrapper around :func:`kmeans_fit`."""

    def __init__(self, n_clusters=8, n_init=20, max_iter=300, random_state=0):
        self.n_clusters = n_clusters
        self.n_init = n_init
        self.max_iter = max_iter
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        res = kmeans_fit(X, self.n_clusters, self.n_init, self.max_iter, self.random_state or 0)
        self.cluster_centers_ = res.centroids
        self.labels_ = res.labels
        self.inertia_ = res.inertia
        self.n_iter_ = res.n_iter
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self)
        X = check_array(X, dtype=np.float64)
        return np.sqrt(_sqdist(X, self.cluster_centers_))

    def predict(self, X):
        check_is_fitted(self)
        X = check_array(X, dtype=np.float64)
        return np.argmin(_sqdist(X, self.cluster_centers_), axis=1)
