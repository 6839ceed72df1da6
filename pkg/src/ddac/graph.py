"""Sparse graphs: kNN construction, self-loop normalization, edge-list files."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .diffmat import spmm  # noqa: F401  re-exported for graph users


@dataclass(frozen=True)
class SparseAdjacency:
    """Immutable coordinate-list graph with edges sorted by (row, col)."""

    n: int
    rows: np.ndarray
    cols: np.ndarray
    weights: np.ndarray
    symmetric: bool = True

    def __post_init__(self):
        if len(self.rows) and (self.rows.min() < 0 or self.cols.min() < 0
                               or self.rows.max() >= self.n or self.cols.max() >= self.n):
            raise ValueError(f"edge index out of range for {self.n} nodes")
        if np.any(~np.isfinite(self.weights)) or np.any(self.weights < 0):
            raise ValueError("edge weights must be finite and non-negative")

    @classmethod
    def from_scipy(cls, m, symmetric: bool = True) -> "SparseAdjacency":
        coo = sp.coo_matrix(m)
        coo.sum_duplicates()
        order = np.lexsort((coo.col, coo.row))
        return cls(
            int(coo.shape[0]),
            coo.row[order].astype(np.int64),
            coo.col[order].astype(np.int64),
            coo.data[order].astype(np.float64),
            symmetric,
        )

    @classmethod
    def from_edges(cls, n: int, edges) -> "SparseAdjacency":
        """Undirected binary graph from (u, v) pairs; repeats collapse, loops are dropped."""
        edges = np.asarray(list(edges), dtype=np.int64).reshape(-1, 2)
        edges = edges[edges[:, 0] != edges[:, 1]]
        if len(edges) and (edges.min() < 0 or edges.max() >= n):
            raise ValueError(f"edge index out of range for {n} nodes")
        u = np.concatenate([edges[:, 0], edges[:, 1]])
        v = np.concatenate([edges[:, 1], edges[:, 0]])
        m = sp.coo_matrix((np.ones(len(u)), (u, v)), shape=(n, n)).tocsr()
        m.data[:] = 1.0
        return cls.from_scipy(m)

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.weights, (self.rows, self.cols)), shape=(self.n, self.n))

    def toarray(self) -> np.ndarray:
        return self.to_scipy().toarray()

    def undirected_edges(self) -> list:
        keep = self.rows < self.cols
        return list(zip(self.rows[keep].tolist(), self.cols[keep].tolist()))


def knn_graph(X, k_neighbors: int = 3) -> SparseAdjacency:
    """Binary kNN graph, symmetrized by union.

    Neighbors are ranked by Euclidean distance; equal distances prefer the
    lower index.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if not 1 <= k_neighbors < n:
        raise ValueError(f"k_neighbors must be in [1, {n - 1}], got {k_neighbors}")
    rows, cols = [], []
    # exact differences, blockwise to bound memory
    block = max(1, 20_000_000 // (n * max(X.shape[1], 1)))
    for start in range(0, n, block):
        idx = np.arange(start, min(n, start + block))
        diff = X[idx, None, :] - X[None, :, :]
        d = np.einsum("ijk,ijk->ij", diff, diff)
        d[np.arange(len(idx)), idx] = np.inf
        nbrs = np.argsort(d, axis=1, kind="stable")[:, :k_neighbors]
        rows.append(np.repeat(idx, k_neighbors))
        cols.append(nbrs.reshape(-1))
    return SparseAdjacency.from_edges(n, np.stack([np.concatenate(rows), np.concatenate(cols)], axis=1))


def normalize_adjacency(A: SparseAdjacency) -> SparseAdjacency:
    """``D^-1/2 (A + I) D^-1/2`` with ``D`` the degrees of ``A + I``."""
    if not A.symmetric:
        raise ValueError("normalization needs a symmetric adjacency")
    m = A.to_scipy() + sp.identity(A.n, format="csr")
    inv_sqrt = 1.0 / np.sqrt(np.asarray(m.sum(axis=1)).reshape(-1))
    d = sp.diags(inv_sqrt)
    return SparseAdjacency.from_scipy(d @ m @ d)


def read_edge_list(path, n: int | None = None) -> SparseAdjacency:
    """Parse ``u<TAB>v`` lines (0-based, undirected). Blank and ``#`` lines are skipped."""
    edges = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t") if "\t" in line else line.split()
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected two node ids, got {raw!r}")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise ValueError(f"{path}:{lineno}: node ids must be integers, got {raw!r}") from None
        if u < 0 or v < 0:
            raise ValueError(f"{path}:{lineno}: node ids must be non-negative")
        edges.append((u, v))
    if n is None:
        n = 1 + max((max(e) for e in edges), default=-1)
    return SparseAdjacency.from_edges(n, edges)


def write_edge_list(path, A: SparseAdjacency) -> None:
    with open(path, "w") as fh:
        for u, v in A.undirected_edges():
            fh.write(f"{u}\t{v}\n")
