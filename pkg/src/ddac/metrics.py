"""External clustering indices: ACC, NMI, ARI."""

from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment


def _check(pred, truth):
    pred = np.asarray(pred).reshape(-1)
    truth = np.asarray(truth).reshape(-1)
    if pred.shape != truth.shape:
        raise ValueError(f"label vectors differ in length: {pred.size} vs {truth.size}")
    if pred.size == 0:
        raise ValueError("label vectors are empty")
    return pred, truth


def contingency(pred, truth) -> np.ndarray:
    """Counts of (predicted cluster, true class) pairs; labels may be arbitrary."""
    pred, truth = _check(pred, truth)
    _, p = np.unique(pred, return_inverse=True)
    _, t = np.unique(truth, return_inverse=True)
    table = np.zeros((p.max() + 1, t.max() + 1), dtype=np.int64)
    np.add.at(table, (p, t), 1)
    return table


def acc(pred, truth) -> float:
    """Best one-to-one matching accuracy (Hungarian assignment)."""
    table = contingency(pred, truth)
    size = max(table.shape)
    square = np.zeros((size, size), dtype=np.int64)
    square[: table.shape[0], : table.shape[1]] = table
    r, c = linear_sum_assignment(square, maximize=True)
    return float(square[r, c].sum() / table.sum())


def _entropy(counts) -> float:
    p = counts[counts > 0] / counts.sum()
    return float(-np.sum(p * np.log(p)))


def nmi(pred, truth) -> float:
    """Mutual information normalized by the arithmetic mean of the two entropies."""
    table = contingency(pred, truth).astype(np.float64)
    n = table.sum()
    h_pred = _entropy(table.sum(axis=1))
    h_true = _entropy(table.sum(axis=0))
    if h_pred == 0 and h_true == 0:
        return 1.0
    pij = table / n
    outer = np.outer(table.sum(axis=1), table.sum(axis=0)) / n**2
    nz = pij > 0
    mi = float(np.sum(pij[nz] * np.log(pij[nz] / outer[nz])))
    return float(np.clip(mi / ((h_pred + h_true) / 2.0), 0.0, 1.0))


def _pairs(x):
    return x * (x - 1) / 2.0


def ari(pred, truth) -> float:
    """Adjusted Rand index from pair counts."""
    table = contingency(pred, truth).astype(np.float64)
    n = table.sum()
    if n < 2:
        raise ValueError("ARI needs at least two samples")
    index = _pairs(table).sum()
    a = _pairs(table.sum(axis=1)).sum()
    b = _pairs(table.sum(axis=0)).sum()
    expected = a * b / _pairs(n)
    max_index = (a + b) / 2.0
    if max_index == expected:
        return 1.0
    return float((index - expected) / (max_index - expected))


def evaluate(pred, truth) -> dict:
    return {"acc": acc(pred, truth), "nmi": nmi(pred, truth), "ari": ari(pred, truth)}
