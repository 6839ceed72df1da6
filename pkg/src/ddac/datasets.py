"""Synthetic benchmark data: Gaussian blobs, embedded rings, stochastic block models."""

from __future__ import annotations

import numpy as np

from .graph import SparseAdjacency


def _orthonormal(rng, rows, cols):
    q, _ = np.linalg.qr(rng.standard_normal((cols, rows)))
    return q.T


def gaussian_blobs(n=1000, d=20, k=4, separation=10.0, sigma=1.0, seed=0):
    """``k`` isotropic blobs whose centers are pairwise exactly ``separation * sigma`` apart."""
    rng = np.random.default_rng(seed)
    if k > d:
        raise ValueError("need d >= k for equidistant centers")
    # scaled simplex vertices: e_i * s / sqrt(2) are pairwise s apart
    centers = np.zeros((k, d))
    centers[np.arange(k), np.arange(k)] = separation * sigma / np.sqrt(2.0)
    centers = centers @ _orthonormal(rng, d, d)
    y = np.arange(n) % k
    X = centers[y] + sigma * rng.standard_normal((n, d))
    return X, y


def embedded_rings(n=1000, d=20, radii=(1.0, 5.0), noise=0.1, seed=0):
    """Two concentric 2-d rings mapped into ``d`` dimensions by a random isometry, plus noise."""
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 2
    angle = rng.uniform(0, 2 * np.pi, n)
    r = np.asarray(radii)[y]
    plane = np.stack([r * np.cos(angle), r * np.sin(angle)], axis=1)
    X = plane @ _orthonormal(rng, 2, d) + noise * rng.standard_normal((n, d))
    return X, y


def stochastic_block_model(sizes=(200, 200, 200), p_in=0.2, p_out=0.01, feature_noise=1.0, seed=0):
    """Planted-partition graph with one-hot block features plus Gaussian noise."""
    rng = np.random.default_rng(seed)
    y = np.repeat(np.arange(len(sizes)), sizes)
    n = len(y)
    probs = np.where(y[:, None] == y[None, :], p_in, p_out)
    upper = np.triu(rng.random((n, n)) < probs, k=1)
    u, v = np.nonzero(upper)
    A = SparseAdjacency.from_edges(n, np.stack([u, v], axis=1))
    X = np.eye(len(sizes))[y] + feature_noise * rng.standard_normal((n, len(sizes)))
    return X, y, A
