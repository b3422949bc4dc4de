"""Covariance-descriptor superpixels: localized k-means with an adaptive search range.

Pixels are points in the joint space of half-vectorised log-covariances and
scaled grid positions.  Each centroid only claims pixels within a radius of
``2 * S * g(centroid)`` where ``S = sqrt(W*H/K)`` is the seed spacing and ``g``
shrinks the radius where the descriptor field changes quickly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .covfield import LogCovField, half_vectorize, led_distance, unhalf_vectorize
from .errors import ParameterError
from .hsi_io import SegMap

_CROSS = ndimage.generate_binary_structure(2, 1)
_FALLBACK_CHUNK = 4096
_FLAT_GRADIENT = 1e-9


@dataclass(frozen=True)
class DensityField:
    g: np.ndarray         # (H, W) search-range factor in [g_min, 1]
    gradient: np.ndarray  # (H, W) smoothed descriptor gradient G


@dataclass(frozen=True)
class Centroid:
    position: np.ndarray  # (x, y)
    log_cov: np.ndarray   # (A, A)
    member_count: int


@dataclass
class SegResult:
    seg: SegMap
    centroids: list[Centroid]
    objective_trace: list[float] = field(default_factory=list)


@dataclass(frozen=True)
class SegmentParams:
    compactness: float = 10.0
    max_iters: int = 10
    tol: float = 1e-3

    def __post_init__(self) -> None:
        if self.compactness <= 0:
            raise ParameterError(f"compactness must be > 0, got {self.compactness}")
        if self.max_iters < 1:
            raise ParameterError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.tol < 0:
            raise ParameterError(f"tol must be >= 0, got {self.tol}")


def content_density(
    field: LogCovField,
    smoothing: int = 5,
    lam: float = 4.0,
    g_min: float = 0.5,
) -> DensityField:
    """Search-range factor ``g = max(g_min, 1 / (1 + lam * Ghat))`` per pixel.

    ``G`` is the sum of horizontal and vertical central differences of the log
    field (clamped at the border), box-smoothed and divided by its 99th
    percentile, then clipped to 1.
    """
    if smoothing < 1 or smoothing % 2 == 0:
        raise ParameterError(f"smoothing must be an odd count >= 1, got {smoothing}")
    if lam < 0:
        raise ParameterError(f"density lambda must be >= 0, got {lam}")
    if not 0 < g_min <= 1:
        raise ParameterError(f"g_min must lie in (0, 1], got {g_min}")
    v = half_vectorize(field.logs)
    h, w = v.shape[:2]
    xr = np.minimum(np.arange(w) + 1, w - 1)
    xl = np.maximum(np.arange(w) - 1, 0)
    yd = np.minimum(np.arange(h) + 1, h - 1)
    yu = np.maximum(np.arange(h) - 1, 0)
    grad = np.linalg.norm(v[:, xr] - v[:, xl], axis=-1) + np.linalg.norm(v[yd] - v[yu], axis=-1)
    if smoothing > 1:
        grad = ndimage.uniform_filter(grad, size=smoothing, mode="nearest")
    ref = float(np.percentile(grad, 99))
    if ref <= 0:
        ref = float(grad.max())
    # Gradients at rounding level (e.g. a constant cube) count as flat.
    flat = ref <= _FLAT_GRADIENT * max(1.0, float(np.abs(v).max()))
    g_hat = np.zeros_like(grad) if flat else np.minimum(grad / ref, 1.0)
    g = np.maximum(g_min, 1.0 / (1.0 + lam * g_hat))
    return DensityField(g, grad)


def clustering_distance(
    pixel: tuple[np.ndarray, np.ndarray],
    centroid: Centroid,
    range_limit: float,
    compactness: float,
    grid_interval: float,
) -> float:
    """Squared joint distance from a pixel ``(position, log matrix)`` to a centroid.

    Infinite when the pixel lies farther than ``range_limit`` from the centroid.
    """
    pos, log = pixel
    d_spat = float(np.hypot(*(np.asarray(pos, dtype=np.float64) - centroid.position)))
    if d_spat > range_limit:
        return math.inf
    d_spec = led_distance(log, centroid.log_cov)
    return d_spec**2 + (compactness / grid_interval) ** 2 * d_spat**2


def grid_seeds(width: int, height: int, k: int) -> np.ndarray:
    """Regular grid of at most ``k`` real-valued ``(x, y)`` seed positions."""
    s = math.sqrt(width * height / k)
    nx = min(width, max(1, round(width / s)))
    ny = min(height, max(1, round(height / s)))
    while nx * ny > k:
        if nx >= ny:
            nx -= 1
        else:
            ny -= 1
    xs = (np.arange(nx) + 0.5) * width / nx - 0.5
    ys = (np.arange(ny) + 0.5) * height / ny - 0.5
    gx, gy = np.meshgrid(xs, ys)
    return np.column_stack([gx.ravel(), gy.ravel()])


def _perturb_seeds(seeds: np.ndarray, gradient: np.ndarray) -> np.ndarray:
    """Move each seed to the strictly lowest-gradient pixel of its 3x3 neighbourhood."""
    h, w = gradient.shape
    out = seeds.copy()
    for i, (x, y) in enumerate(seeds):
        cx, cy = int(round(x)), int(round(y))
        y0, y1 = max(0, cy - 1), min(h, cy + 2)
        x0, x1 = max(0, cx - 1), min(w, cx + 2)
        patch = gradient[y0:y1, x0:x1]
        j = int(np.argmin(patch))
        if patch.flat[j] < gradient[cy, cx]:
            py, px = divmod(j, patch.shape[1])
            out[i] = (x0 + px, y0 + py)
    return out


def _rounded(positions: np.ndarray, width: int, height: int) -> tuple[np.ndarray, np.ndarray]:
    cx = np.clip(np.rint(positions[:, 0]).astype(np.int64), 0, width - 1)
    cy = np.clip(np.rint(positions[:, 1]).astype(np.int64), 0, height - 1)
    return cx, cy


def _joint_cost(vec, pos, c_vec, c_pos, spatial_w):
    d_spec = np.sum((vec - c_vec) ** 2, axis=-1)
    d_spat = np.sum((pos - c_pos) ** 2, axis=-1)
    return d_spec + spatial_w * d_spat


def assign_pixels(
    vec: np.ndarray,
    c_vec: np.ndarray,
    c_pos: np.ndarray,
    limits: np.ndarray,
    spatial_w: float,
    current: np.ndarray | None = None,
) -> np.ndarray:
    """One assignment sweep.

    Every pixel goes to the in-range centroid with the smallest joint cost,
    ties to the lowest index.  The pixel's ``current`` centroid (if any) stays a
    candidate even when it has drifted out of range, which keeps the objective
    non-increasing.  Pixels with no candidate at all take the nearest centroid
    without range restriction.
    """
    h, w, _ = vec.shape
    ys, xs = np.mgrid[0:h, 0:w]
    pos = np.stack([xs, ys], axis=-1).astype(np.float64)
    best = np.full((h, w), np.inf)
    best_idx = np.full((h, w), -1, dtype=np.int64)
    if current is not None:
        best = _joint_cost(vec, pos, c_vec[current], c_pos[current], spatial_w)
        best_idx = current.copy()

    for k in range(len(c_vec)):
        px, py = c_pos[k]
        r = limits[k]
        x0, x1 = max(0, math.ceil(px - r)), min(w, math.floor(px + r) + 1)
        y0, y1 = max(0, math.ceil(py - r)), min(h, math.floor(py + r) + 1)
        if x0 >= x1 or y0 >= y1:
            continue
        sub_pos = pos[y0:y1, x0:x1]
        d_spat = np.sum((sub_pos - c_pos[k]) ** 2, axis=-1)
        cost = np.sum((vec[y0:y1, x0:x1] - c_vec[k]) ** 2, axis=-1) + spatial_w * d_spat
        b = best[y0:y1, x0:x1]
        bi = best_idx[y0:y1, x0:x1]
        take = (d_spat <= r * r) & ((cost < b) | ((cost == b) & (k < bi)))
        b[take] = cost[take]
        bi[take] = k

    lost = np.flatnonzero(best_idx.ravel() < 0)
    if lost.size:
        flat_vec = vec.reshape(-1, vec.shape[-1])
        flat_pos = pos.reshape(-1, 2)
        flat_idx = best_idx.ravel()
        for start in range(0, lost.size, _FALLBACK_CHUNK):
            chunk = lost[start:start + _FALLBACK_CHUNK]
            cost = _joint_cost(flat_vec[chunk, None, :], flat_pos[chunk, None, :], c_vec[None], c_pos[None], spatial_w)
            flat_idx[chunk] = np.argmin(cost, axis=1)
        best_idx = flat_idx.reshape(h, w)
    return best_idx


def _update_centroids(vec, assign, c_vec, c_pos):
    """Member means of descriptor and position; empty centroids stay put."""
    h, w, d = vec.shape
    n = len(c_vec)
    labels = assign.ravel()
    counts = np.bincount(labels, minlength=n).astype(np.float64)
    ys, xs = np.divmod(np.arange(h * w), w)
    sum_x = np.bincount(labels, weights=xs.astype(np.float64), minlength=n)
    sum_y = np.bincount(labels, weights=ys.astype(np.float64), minlength=n)
    flat = vec.reshape(-1, d)
    sum_v = np.stack([np.bincount(labels, weights=flat[:, j], minlength=n) for j in range(d)], axis=1)
    live = counts > 0
    new_pos = c_pos.copy()
    new_vec = c_vec.copy()
    new_pos[live, 0] = sum_x[live] / counts[live]
    new_pos[live, 1] = sum_y[live] / counts[live]
    new_vec[live] = sum_v[live] / counts[live, None]
    return new_vec, new_pos, counts.astype(np.int64)


def objective(vec: np.ndarray, assign: np.ndarray, c_vec: np.ndarray, c_pos: np.ndarray, spatial_w: float) -> float:
    """Sum of squared joint distances of every pixel to its assigned centroid."""
    h, w, _ = vec.shape
    ys, xs = np.mgrid[0:h, 0:w]
    pos = np.stack([xs, ys], axis=-1).astype(np.float64)
    return float(np.sum(_joint_cost(vec, pos, c_vec[assign], c_pos[assign], spatial_w)))


def _component_boundary_votes(assign: np.ndarray, mask: np.ndarray, oy: int, ox: int) -> dict[int, int]:
    """Count 4-neighbour pixel pairs between ``mask`` (offset into ``assign``) and each other label."""
    h, w = assign.shape
    mh, mw = mask.shape
    votes: dict[int, int] = {}
    ys, xs = np.nonzero(mask)
    ys = ys + oy
    xs = xs + ox
    own = assign[ys[0], xs[0]] if ys.size else -1
    for dy, dx in ((0, 1), (0, -1), (1, 0), (-1, 0)):
        ny, nx = ys + dy, xs + dx
        ok = (ny >= 0) & (ny < h) & (nx >= 0) & (nx < w)
        ny, nx = ny[ok], nx[ok]
        inside = np.zeros(ny.shape, dtype=bool)
        ly, lx = ny - oy, nx - ox
        in_box = (ly >= 0) & (ly < mh) & (lx >= 0) & (lx < mw)
        inside[in_box] = mask[ly[in_box], lx[in_box]]
        for lab in assign[ny[~inside], nx[~inside]]:
            if lab != own:
                votes[int(lab)] = votes.get(int(lab), 0) + 1
    return votes


def enforce_connectivity(assign: np.ndarray) -> SegMap:
    """Make every label 4-connected and renumber labels densely.

    For each label the largest component (first in raster order on ties) keeps
    the label; every other component is handed to the adjacent label sharing
    the longest border (lowest label on ties).  Repeats until stable.
    """
    a = np.asarray(assign, dtype=np.int64).copy()
    while True:
        moved = False
        grown: set[int] = set()  # labels whose bounding box is stale for this pass
        objects = ndimage.find_objects(a + 1)
        for lab, box in enumerate(objects):
            if box is None or lab in grown:
                continue
            mask = a[box] == lab
            comp, n = ndimage.label(mask, structure=_CROSS)
            if n <= 1:
                continue
            sizes = np.bincount(comp.ravel())[1:]
            keep = int(np.argmax(sizes)) + 1
            for c in range(1, n + 1):
                if c == keep:
                    continue
                piece = comp == c
                votes = _component_boundary_votes(a, piece, box[0].start, box[1].start)
                if not votes:
                    continue
                top = max(votes.values())
                target = min(lbl for lbl, v in votes.items() if v == top)
                a[box][piece] = target
                grown.add(target)
                moved = True
        if not moved:
            break
    _, dense = np.unique(a, return_inverse=True)
    dense = dense.reshape(a.shape)
    return SegMap(dense, int(dense.max()) + 1)


def segment(
    field: LogCovField,
    k: int,
    density: DensityField,
    params: SegmentParams | None = None,
) -> SegResult:
    """Segment the descriptor field into at most ``k`` connected superpixels."""
    params = params or SegmentParams()
    h, w = field.height, field.width
    if not 1 <= k <= h * w:
        raise ParameterError(f"superpixel count must lie in [1, {h * w}], got {k}")
    vec = half_vectorize(field.logs)
    s_r = math.sqrt(h * w / k)
    spatial_w = (params.compactness / s_r) ** 2

    seeds = grid_seeds(w, h, k)
    spacing = min(w / len(np.unique(seeds[:, 0])), h / len(np.unique(seeds[:, 1])))
    if spacing >= 3:
        seeds = _perturb_seeds(seeds, density.gradient)
    cx, cy = _rounded(seeds, w, h)
    c_pos = seeds.astype(np.float64)
    c_vec = vec[cy, cx].copy()

    assign = None
    trace: list[float] = []
    for _ in range(params.max_iters):
        cx, cy = _rounded(c_pos, w, h)
        limits = 2.0 * s_r * density.g[cy, cx]
        assign = assign_pixels(vec, c_vec, c_pos, limits, spatial_w, assign)
        c_vec, c_pos, _ = _update_centroids(vec, assign, c_vec, c_pos)
        q = objective(vec, assign, c_vec, c_pos, spatial_w)
        if trace:
            prev = trace[-1]
            trace.append(q)
            if prev <= 0 or abs(prev - q) < params.tol * prev:
                break
        else:
            trace.append(q)

    seg = enforce_connectivity(assign)
    f_vec, f_pos, counts = _update_centroids(
        vec, seg.assignment, np.zeros((seg.count, vec.shape[-1])), np.zeros((seg.count, 2))
    )
    logs = unhalf_vectorize(f_vec, field.dim)
    centroids = [Centroid(f_pos[i], logs[i], int(counts[i])) for i in range(seg.count)]
    return SegResult(seg, centroids, trace)


def is_four_connected(seg: SegMap) -> bool:
    for lab, box in enumerate(ndimage.find_objects(seg.assignment + 1)):
        if box is None:
            return False
        _, n = ndimage.label(seg.assignment[box] == lab, structure=_CROSS)
        if n != 1:
            return False
    return True
