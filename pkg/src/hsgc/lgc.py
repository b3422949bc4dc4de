"""Seed construction and Local and Global Consistency label propagation."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse

from .errors import FormatError, ParameterError
from .graph import SimilarityGraph
from .hsi_io import LabelMap, SegMap


@dataclass(frozen=True)
class SeedMatrix:
    Y: np.ndarray             # (K', c)
    labeled_mask: np.ndarray  # (K',) bool


@dataclass
class Propagation:
    F: np.ndarray
    iterations: int
    residual: float           # max-norm of the last update
    converged: bool
    residual_trace: list[float] = field(default_factory=list)  # Frobenius norms of successive updates


@dataclass
class PropagationResult:
    F: np.ndarray
    iterations: int
    residual: float
    converged: bool
    superpixel_labels: np.ndarray
    pixel_labels: LabelMap


def build_seed_matrix(seg: SegMap, seeds: LabelMap, c: int) -> SeedMatrix:
    """Per-superpixel class frequencies among its seed pixels (zero row without seeds)."""
    if c < 1:
        raise ParameterError("class count must be >= 1; nothing to propagate")
    if seeds.labels.shape != seg.assignment.shape:
        raise ParameterError("seed map and segmentation map differ in size")
    if seeds.n_classes > c:
        raise ParameterError(f"seed class {seeds.n_classes} exceeds class count {c}")
    lab = seeds.labels.ravel()
    sp = seg.assignment.ravel()
    hit = lab > 0
    counts = np.zeros((seg.count, c))
    np.add.at(counts, (sp[hit], lab[hit] - 1), 1.0)
    totals = counts.sum(axis=1)
    labeled = totals > 0
    Y = np.zeros_like(counts)
    Y[labeled] = counts[labeled] / totals[labeled, None]
    return SeedMatrix(Y, labeled)


def normalized_affinity(graph: SimilarityGraph) -> tuple[sparse.csr_matrix, np.ndarray]:
    """``D^-1/2 W D^-1/2`` with zero diagonal, plus a mask of isolated nodes."""
    n = graph.node_count
    r = np.concatenate([graph.rows, graph.cols])
    c = np.concatenate([graph.cols, graph.rows])
    w = np.concatenate([graph.weights, graph.weights])
    W = sparse.csr_matrix((w, (r, c)), shape=(n, n))
    deg = np.asarray(W.sum(axis=1)).ravel()
    isolated = deg <= 0
    inv_sqrt = np.zeros(n)
    inv_sqrt[~isolated] = 1.0 / np.sqrt(deg[~isolated])
    D = sparse.diags(inv_sqrt)
    return (D @ W @ D).tocsr(), isolated


def propagate(
    S: sparse.spmatrix | np.ndarray,
    Y: np.ndarray,
    alpha: float = 0.99,
    tol: float = 1e-8,
    max_iters: int = 5000,
) -> Propagation:
    """Iterate ``F <- alpha*S*F + (1-alpha)*Y`` from ``F = Y`` until the max-norm step is below ``tol``."""
    if not 0 < alpha < 1:
        raise ParameterError(f"alpha must lie in (0, 1), got {alpha}")
    if max_iters < 1:
        raise ParameterError(f"max_iters must be >= 1, got {max_iters}")
    Y = np.asarray(Y, dtype=np.float64)
    base = (1 - alpha) * Y
    F = Y.copy()
    trace: list[float] = []
    step = np.inf
    for it in range(1, max_iters + 1):
        nxt = alpha * (S @ F) + base
        diff = nxt - F
        step = float(np.max(np.abs(diff))) if diff.size else 0.0
        trace.append(float(np.linalg.norm(diff)))
        F = nxt
        if step < tol:
            return Propagation(F, it, step, True, trace)
    return Propagation(F, max_iters, step, False, trace)


def closed_form(S: sparse.spmatrix | np.ndarray, Y: np.ndarray, alpha: float) -> np.ndarray:
    """Dense solve of ``(I - alpha*S) F = (1-alpha) Y``."""
    S = S.toarray() if sparse.issparse(S) else np.asarray(S)
    n = S.shape[0]
    return np.linalg.solve(np.eye(n) - alpha * S, (1 - alpha) * np.asarray(Y, dtype=np.float64))


def argmax_labels(F: np.ndarray) -> np.ndarray:
    """1-based argmax per row (ties to the lowest class); all-zero rows give 0."""
    labels = np.argmax(F, axis=1) + 1
    labels[~np.any(F != 0, axis=1)] = 0
    return labels


def finalize_labels(F: np.ndarray, seg: SegMap) -> tuple[np.ndarray, LabelMap]:
    if F.shape[0] != seg.count:
        raise ParameterError(f"F has {F.shape[0]} rows, segmentation has {seg.count} superpixels")
    sp_labels = argmax_labels(F)
    return sp_labels, LabelMap(sp_labels[seg.assignment])


def classify(
    graph: SimilarityGraph,
    seg: SegMap,
    seeds: LabelMap,
    c: int,
    alpha: float = 0.99,
    tol: float = 1e-8,
    max_iters: int = 5000,
) -> PropagationResult:
    seed = build_seed_matrix(seg, seeds, c)
    S, _ = normalized_affinity(graph)
    prop = propagate(S, seed.Y, alpha, tol, max_iters)
    sp_labels, pixel_labels = finalize_labels(prop.F, seg)
    return PropagationResult(prop.F, prop.iterations, prop.residual, prop.converged, sp_labels, pixel_labels)


def write_matrix_csv(F: np.ndarray, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in F:
            fh.write(",".join(f"{v:.9g}" for v in row) + "\n")


def read_matrix_csv(path: str | Path) -> np.ndarray:
    rows = [line.split(",") for line in Path(path).read_text(encoding="utf-8").splitlines() if line.strip()]
    if rows and any(len(r) != len(rows[0]) for r in rows):
        raise FormatError(f"{path}: ragged matrix")
    return np.asarray(rows, dtype=np.float64)
