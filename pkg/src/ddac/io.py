"""CSV features, label files and JSON artifacts."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np


class ParseError(ValueError):
    def __init__(self, path, line: int, message: str):
        self.path = str(path)
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


@dataclass
class DatasetBundle:
    X: np.ndarray
    labels: Optional[np.ndarray] = None
    columns: Optional[list] = None


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def load_features(path) -> DatasetBundle:
    """Read a numeric CSV, one sample per row.

    A header row is optional; if present and its last column is ``label``,
    that column is returned as integer labels.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        rows = [(i, r) for i, r in enumerate(csv.reader(fh), start=1) if any(c.strip() for c in r)]
    if not rows:
        raise ParseError(path, 1, "empty dataset")
    header = None
    first_line, first = rows[0]
    if not all(_is_number(c) for c in first):
        header = [c.strip() for c in first]
        rows = rows[1:]
    if not rows:
        raise ParseError(path, first_line + 1, "empty dataset")
    width = len(header) if header else len(rows[0][1])
    data = np.empty((len(rows), width))
    for r, (lineno, fields) in enumerate(rows):
        if len(fields) != width:
            raise ParseError(path, lineno, f"expected {width} fields, got {len(fields)}")
        for c, field in enumerate(fields):
            try:
                data[r, c] = float(field)
            except ValueError:
                raise ParseError(path, lineno, f"non-numeric field {field!r} in column {c + 1}") from None
    if not np.all(np.isfinite(data)):
        bad = int(np.flatnonzero(~np.isfinite(data).all(axis=1))[0])
        raise ParseError(path, rows[bad][0], "non-finite value")
    if header and header[-1] == "label":
        labels = data[:, -1]
        if np.any(labels != np.round(labels)):
            raise ParseError(path, rows[0][0], "label column must hold integers")
        return DatasetBundle(data[:, :-1].copy(), labels.astype(np.int64), header[:-1])
    return DatasetBundle(data, None, header)


def save_features(path, X, labels=None) -> None:
    """Write features (and labels) with 17 significant digits, enough to round-trip doubles."""
    X = np.asarray(X, dtype=np.float64)
    header = [f"x{j}" for j in range(X.shape[1])] + (["label"] if labels is not None else [])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i, row in enumerate(X):
            out = [f"{v:.17g}" for v in row]
            if labels is not None:
                out.append(str(int(labels[i])))
            w.writerow(out)


def write_labels(path, labels) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "cluster"])
        for i, c in enumerate(np.asarray(labels).tolist()):
            w.writerow([i, int(c)])


def read_labels(path) -> np.ndarray:
    """Labels from a ``cluster`` or ``label`` column, ordered by ``index`` when present."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [c.strip() for c in next(reader)]
        except StopIteration:
            raise ParseError(path, 1, "empty label file") from None
        col = next((c for c in ("cluster", "label") if c in header), None)
        if col is None:
            raise ParseError(path, 1, "no 'cluster' or 'label' column")
        j = header.index(col)
        idx_col = header.index("index") if "index" in header else None
        values, order = [], []
        for lineno, row in enumerate(reader, start=2):
            if not any(c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(path, lineno, f"expected {len(header)} fields, got {len(row)}")
            try:
                values.append(int(row[j]))
                order.append(int(row[idx_col]) if idx_col is not None else len(order))
            except ValueError:
                raise ParseError(path, lineno, f"non-integer field in {row!r}") from None
    if not values:
        raise ParseError(path, 2, "empty label file")
    return np.asarray(values, dtype=np.int64)[np.argsort(order, kind="stable")]


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
