"""Per-superpixel features: mean spectrum, neighbour-weighted spectrum, centre."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, ParameterError
from .hsi_io import HsiCube, SegMap


@dataclass(frozen=True)
class SuperpixelFeatures:
    mean: np.ndarray       # (K', A)
    weighted: np.ndarray   # (K', A)
    position: np.ndarray   # (K', 2) as (x, y)
    adjacency: list[list[int]]
    h: float

    @property
    def count(self) -> int:
        return self.mean.shape[0]


def mean_features(reduced: HsiCube, seg: SegMap) -> np.ndarray:
    if (reduced.height, reduced.width) != seg.assignment.shape:
        raise ParameterError("segmentation map and cube differ in size")
    labels = seg.assignment.ravel()
    x = reduced.spectra().astype(np.float64)
    counts = np.bincount(labels, minlength=seg.count).astype(np.float64)
    sums = np.stack([np.bincount(labels, weights=x[:, j], minlength=seg.count) for j in range(x.shape[1])], axis=1)
    return sums / counts[:, None]


def adjacency(seg: SegMap) -> list[list[int]]:
    """Sorted 4-neighbour adjacency lists between superpixels."""
    a = seg.assignment
    pairs = np.concatenate([
        np.stack([a[:, :-1].ravel(), a[:, 1:].ravel()], axis=1),
        np.stack([a[:-1, :].ravel(), a[1:, :].ravel()], axis=1),
    ])
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    pairs = np.unique(np.sort(pairs, axis=1), axis=0)
    adj: list[set[int]] = [set() for _ in range(seg.count)]
    for i, j in pairs:
        adj[i].add(int(j))
        adj[j].add(int(i))
    return [sorted(s) for s in adj]


def median_bandwidth(means: np.ndarray, adj: list[list[int]]) -> float:
    """Median squared mean-feature distance over adjacent pairs; 1.0 if undefined or zero."""
    d2 = [float(np.sum((means[i] - means[j]) ** 2)) for i, nbrs in enumerate(adj) for j in nbrs if j > i]
    h = float(np.median(d2)) if d2 else 0.0
    return h if h > 0 else 1.0


def neighbour_weights(means: np.ndarray, i: int, nbrs: list[int], h: float) -> np.ndarray:
    """Normalised ``exp(-||m_z - m_i||^2 / h)`` over the neighbours ``nbrs`` of ``i``."""
    d2 = np.sum((means[nbrs] - means[i]) ** 2, axis=1)
    logits = -(d2 - d2.min()) / h
    e = np.exp(logits)
    return e / e.sum()


def weighted_features(means: np.ndarray, adj: list[list[int]], h: float) -> np.ndarray:
    """Neighbour-weighted means; an isolated superpixel keeps its own mean."""
    if not h > 0:
        raise ParameterError(f"h must be > 0, got {h}")
    out = means.copy()
    for i, nbrs in enumerate(adj):
        if nbrs:
            out[i] = neighbour_weights(means, i, nbrs, h) @ means[nbrs]
    return out


def centroid_positions(seg: SegMap) -> np.ndarray:
    h, w = seg.assignment.shape
    labels = seg.assignment.ravel()
    ys, xs = np.divmod(np.arange(h * w), w)
    counts = np.bincount(labels, minlength=seg.count).astype(np.float64)
    sx = np.bincount(labels, weights=xs.astype(np.float64), minlength=seg.count)
    sy = np.bincount(labels, weights=ys.astype(np.float64), minlength=seg.count)
    return np.column_stack([sx / counts, sy / counts])


def extract_features(reduced: HsiCube, seg: SegMap, h: float | None = None) -> SuperpixelFeatures:
    """All features for ``seg``; ``h=None`` selects the median heuristic."""
    means = mean_features(reduced, seg)
    adj = adjacency(seg)
    if h is None:
        h = median_bandwidth(means, adj)
    return SuperpixelFeatures(means, weighted_features(means, adj, h), centroid_positions(seg), adj, float(h))


def write_features_csv(features: SuperpixelFeatures, path: str | Path) -> None:
    """One row per superpixel: index, x, y, mean_*, weighted_* (full float precision)."""
    a = features.mean.shape[1]
    header = ["index", "x", "y"] + [f"mean_{j}" for j in range(a)] + [f"weighted_{j}" for j in range(a)]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# h={features.h!r}\n")
        fh.write(",".join(header) + "\n")
        for i in range(features.count):
            vals = [*features.position[i], *features.mean[i], *features.weighted[i]]
            fh.write(",".join([str(i)] + [repr(float(v)) for v in vals]) + "\n")


def read_features_csv(path: str | Path) -> SuperpixelFeatures:
    """Inverse of :func:`write_features_csv`; adjacency is not stored and comes back empty."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    h = 1.0
    if lines and lines[0].startswith("# h="):
        h = float(lines.pop(0)[4:])
    if not lines:
        raise FormatError(f"{path}: missing header")
    header = lines[0].split(",")
    a = sum(1 for col in header if col.startswith("mean_"))
    if header[:3] != ["index", "x", "y"] or len(header) != 3 + 2 * a:
        raise FormatError(f"{path}: unexpected header {header}")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != len(header):
            raise FormatError(f"{path}:{lineno}: expected {len(header)} fields")
        if int(parts[0]) != len(rows):
            raise FormatError(f"{path}:{lineno}: superpixel indices must be consecutive")
        rows.append([float(v) for v in parts[1:]])
    arr = np.asarray(rows, dtype=np.float64).reshape(len(rows), 2 + 2 * a)
    return SuperpixelFeatures(arr[:, 2:2 + a], arr[:, 2 + a:], arr[:, :2], [[] for _ in rows], h)
