"""Turn attribution grids into per-cell repair penalties.

Cells at or above the nearest-rank percentile are marked; the largest
connected region of marked cells becomes cheap to change (``low``), every
other cell expensive (``high``).
"""

from __future__ import annotations

import csv
import math

import numpy as np


class EmptyGrid(ValueError):
    pass


def nearest_rank_threshold(values: np.ndarray, p: float) -> float:
    flat = np.sort(np.asarray(values, dtype=np.float64).ravel())
    if flat.size == 0:
        raise EmptyGrid("no attribution values")
    if not 0 < p < 100:
        raise ValueError(f"percentile must lie strictly between 0 and 100, got {p}")
    rank = math.ceil(round(p * flat.size / 100.0, 9))
    return float(flat[max(rank, 1) - 1])


def threshold_percentile(grid: np.ndarray, p: float = 80) -> np.ndarray:
    values = np.asarray(grid, dtype=np.float64)
    return values >= nearest_rank_threshold(values, p)


def _find(parent: list[int], a: int) -> int:
    while parent[a] != a:
        parent[a] = parent[parent[a]]
        a = parent[a]
    return a


def connected_components(binmap: np.ndarray, connectivity: int = 8) -> tuple[np.ndarray, list[int]]:
    """Two-pass labelling with union-find.

    Returns the label image (0 = background, components numbered from 1 in
    row-major order of their first cell) and the area of each label.
    """
    if connectivity not in (4, 8):
        raise ValueError("connectivity must be 4 or 8")
    b = np.asarray(binmap, dtype=bool)
    rows, cols = b.shape
    prov = np.zeros((rows, cols), dtype=np.int64)
    parent = [0]
    back = [(-1, 0), (0, -1)] if connectivity == 4 else [(-1, -1), (-1, 0), (-1, 1), (0, -1)]
    for r in range(rows):
        for c in range(cols):
            if not b[r, c]:
                continue
            seen = [prov[r + dr, c + dc] for dr, dc in back
                    if 0 <= r + dr < rows and 0 <= c + dc < cols and prov[r + dr, c + dc]]
            if not seen:
                parent.append(len(parent))
                prov[r, c] = len(parent) - 1
                continue
            root = min(_find(parent, s) for s in seen)
            prov[r, c] = root
            for s in seen:
                rs = _find(parent, s)
                if rs != root:
                    parent[max(rs, root)] = min(rs, root)
                    root = min(rs, root)
    labels = np.zeros_like(prov)
    dense: dict[int, int] = {}
    areas: list[int] = []
    for r in range(rows):
        for c in range(cols):
            if prov[r, c]:
                root = _find(parent, prov[r, c])
                if root not in dense:
                    dense[root] = len(dense) + 1
                    areas.append(0)
                labels[r, c] = dense[root]
                areas[dense[root] - 1] += 1
    return labels, areas


def attributions_to_weights(grid: np.ndarray, p: float = 80, low: int = 1, high: int = 10,
                            connectivity: int = 8) -> np.ndarray:
    values = np.asarray(grid, dtype=np.float64)
    if values.size == 0:
        raise EmptyGrid("no attribution values")
    labels, areas = connected_components(threshold_percentile(values, p), connectivity)
    # argmax returns the first maximum, i.e. the smallest label on ties
    largest = int(np.argmax(areas)) + 1
    return np.where(labels == largest, low, high).astype(np.int64)


def write_weights(weights: np.ndarray, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        csv.writer(fh).writerows(np.asarray(weights, dtype=np.int64).tolist())


def read_weights(path) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [[int(v) for v in row] for row in csv.reader(fh) if row]
    if not rows:
        raise EmptyGrid(f"{path} holds no weights")
    return np.array(rows, dtype=np.int64)
