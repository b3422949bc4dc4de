"""Sparse kNN similarity graph over superpixels.

The weight of a pair is the product of a spectral kernel on mean and weighted
features and a Gaussian kernel on centre positions.  Each node keeps its ``k``
heaviest partners and the edge set is the union of those choices.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, ParameterError
from .features import SuperpixelFeatures

_TINY = np.finfo(np.float64).tiny


@dataclass(frozen=True)
class GraphParams:
    beta: float = 0.9
    sigma_s: float | None = None
    sigma_l: float | None = None
    k: int = 20

    def __post_init__(self) -> None:
        if not 0 <= self.beta <= 1:
            raise ParameterError(f"beta must lie in [0, 1], got {self.beta}")
        for name in ("sigma_s", "sigma_l"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ParameterError(f"{name} must be > 0, got {v}")
        if self.k < 1:
            raise ParameterError(f"k must be >= 1, got {self.k}")


@dataclass(frozen=True)
class SimilarityGraph:
    node_count: int
    rows: np.ndarray     # i of each edge, i < j
    cols: np.ndarray     # j of each edge
    weights: np.ndarray  # w_ij in (0, 1]
    beta: float
    sigma_s: float
    sigma_l: float
    k: int
    warning: str | None = None

    def degrees(self) -> np.ndarray:
        return np.bincount(np.concatenate([self.rows, self.cols]), minlength=self.node_count)

    def dense(self) -> np.ndarray:
        w = np.zeros((self.node_count, self.node_count))
        w[self.rows, self.cols] = self.weights
        w[self.cols, self.rows] = self.weights
        return w


def spectral_similarity(
    fi: tuple[np.ndarray, np.ndarray],
    fj: tuple[np.ndarray, np.ndarray],
    beta: float,
    sigma_s: float,
) -> float:
    """Kernel on ``(mean, weighted)`` feature pairs; 1 for identical features."""
    if not 0 <= beta <= 1:
        raise ParameterError(f"beta must lie in [0, 1], got {beta}")
    if not sigma_s > 0:
        raise ParameterError(f"sigma_s must be > 0, got {sigma_s}")
    dm = float(np.sum((np.asarray(fi[0]) - np.asarray(fj[0])) ** 2))
    dw = float(np.sum((np.asarray(fi[1]) - np.asarray(fj[1])) ** 2))
    return math.exp(((beta - 1) * dw - beta * dm) / sigma_s**2)


def location_similarity(pi: np.ndarray, pj: np.ndarray, sigma_l: float) -> float:
    if not sigma_l > 0:
        raise ParameterError(f"sigma_l must be > 0, got {sigma_l}")
    d2 = float(np.sum((np.asarray(pi, dtype=np.float64) - np.asarray(pj, dtype=np.float64)) ** 2))
    return math.exp(-d2 / sigma_l**2)


def _row_sq_dists(x: np.ndarray, i: int) -> np.ndarray:
    return np.sum((x - x[i]) ** 2, axis=1)


def _median_knn(dists: list[np.ndarray], k_eff: int) -> float:
    """sqrt of the median of each node's ``k_eff`` smallest squared distances (1.0 if zero)."""
    picks = []
    for i, d in enumerate(dists):
        d = np.delete(d, i)
        picks.append(np.partition(d, k_eff - 1)[:k_eff])
    med = float(np.median(np.concatenate(picks)))
    return math.sqrt(med) if med > 0 else 1.0


def build_graph(features: SuperpixelFeatures, params: GraphParams | None = None) -> SimilarityGraph:
    """Union-symmetrised kNN graph ranked by combined weight (ties to the lower index).

    Unset kernel widths default to the median of each node's ``k`` smallest
    squared distances: the ``beta``-mixed feature distance for ``sigma_s`` and
    the centre distance for ``sigma_l``.
    """
    params = params or GraphParams()
    n = features.count
    beta = params.beta
    if n < 2:
        msg = f"graph has {n} node(s); no edges built"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        empty = np.zeros(0, dtype=np.int64)
        return SimilarityGraph(n, empty, empty, np.zeros(0), beta, params.sigma_s or 1.0,
                               params.sigma_l or 1.0, params.k, msg)
    k_eff = min(params.k, n - 1)

    spec = [beta * _row_sq_dists(features.mean, i) + (1 - beta) * _row_sq_dists(features.weighted, i)
            for i in range(n)]
    loc = [_row_sq_dists(features.position, i) for i in range(n)]
    sigma_s = params.sigma_s if params.sigma_s is not None else _median_knn(spec, k_eff)
    sigma_l = params.sigma_l if params.sigma_l is not None else _median_knn(loc, k_eff)

    chosen: set[tuple[int, int]] = set()
    idx = np.arange(n)
    for i in range(n):
        logw = -spec[i] / sigma_s**2 - loc[i] / sigma_l**2
        order = np.lexsort((idx, -logw))
        order = order[order != i][:k_eff]
        chosen.update((min(i, int(j)), max(i, int(j))) for j in order)

    edges = np.array(sorted(chosen), dtype=np.int64)
    rows, cols = edges[:, 0], edges[:, 1]
    weights = np.empty(len(edges))
    for e, (i, j) in enumerate(edges):
        s = spectral_similarity((features.mean[i], features.weighted[i]),
                                (features.mean[j], features.weighted[j]), beta, sigma_s)
        l = location_similarity(features.position[i], features.position[j], sigma_l)
        weights[e] = max(s * l, _TINY)
    return SimilarityGraph(n, rows, cols, weights, beta, float(sigma_s), float(sigma_l), params.k)


def write_graph_csv(graph: SimilarityGraph, path: str | Path) -> None:
    """Edges as ``i,j,w`` lines (i < j, 9 significant digits) after a ``# nodes=`` line."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# nodes={graph.node_count} beta={graph.beta!r} sigma_s={graph.sigma_s!r} "
                 f"sigma_l={graph.sigma_l!r} k={graph.k}\n")
        for i, j, w in zip(graph.rows, graph.cols, graph.weights):
            fh.write(f"{i},{j},{w:.9g}\n")


def read_graph_csv(path: str | Path) -> SimilarityGraph:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    meta: dict[str, str] = {}
    edges = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        if line.startswith("#"):
            for tok in line[1:].split():
                key, _, val = tok.partition("=")
                meta[key] = val
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise FormatError(f"{path}:{lineno}: expected 'i,j,w'")
        i, j, w = int(parts[0]), int(parts[1]), float(parts[2])
        if not i < j:
            raise FormatError(f"{path}:{lineno}: edges must satisfy i < j")
        if not 0 < w <= 1:
            raise FormatError(f"{path}:{lineno}: weight {w} outside (0, 1]")
        edges.append((i, j, w))
    top = max((j for _, j, _ in edges), default=-1) + 1
    n = int(meta.get("nodes", top))
    if n < top:
        raise FormatError(f"{path}: edge index {top - 1} exceeds node count {n}")
    arr = np.array(edges, dtype=np.float64).reshape(-1, 3)
    return SimilarityGraph(
        n, arr[:, 0].astype(np.int64), arr[:, 1].astype(np.int64), arr[:, 2],
        float(meta.get("beta", "nan")), float(meta.get("sigma_s", "nan")),
        float(meta.get("sigma_l", "nan")), int(meta.get("k", "0")),
    )
