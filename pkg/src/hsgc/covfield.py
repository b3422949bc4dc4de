"""Local spectral covariance descriptors and the Log-Euclidean distance.

Each pixel of the reduced cube is described by the covariance of the spectra in
a square window around it.  The descriptor is stored as its matrix logarithm so
that distances and averages become ordinary Euclidean operations.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, SpdError
from .hsi_io import HsiCube


@dataclass(frozen=True)
class LogCovField:
    logs: np.ndarray   # (H, W, A, A)
    window: int
    epsilon: float

    @property
    def height(self) -> int:
        return self.logs.shape[0]

    @property
    def width(self) -> int:
        return self.logs.shape[1]

    @property
    def dim(self) -> int:
        return self.logs.shape[2]


def _check_window(window: int) -> None:
    if window < 3 or window % 2 == 0:
        raise ParameterError(f"window must be an odd count >= 3, got {window}")


def local_covariance(reduced: HsiCube, center: tuple[int, int], window: int, epsilon: float) -> np.ndarray:
    """Regularised sample covariance over the clamped ``window`` x ``window`` neighbourhood.

    ``center`` is ``(x, y)``.  A single-sample neighbourhood has zero sample
    covariance, so the result is ``epsilon * I``.
    """
    _check_window(window)
    if epsilon <= 0:
        raise ParameterError(f"epsilon must be > 0, got {epsilon}")
    x, y = center
    r = window // 2
    patch = reduced.data[max(0, y - r): y + r + 1, max(0, x - r): x + r + 1]
    samples = patch.reshape(-1, reduced.bands).astype(np.float64)
    cov = sample_covariance(samples)
    return cov + epsilon * np.eye(reduced.bands)


def sample_covariance(samples: np.ndarray) -> np.ndarray:
    """Covariance with denominator ``n - 1``; zero for a single sample."""
    n, dim = samples.shape
    if n < 2:
        return np.zeros((dim, dim))
    centred = samples - samples.mean(axis=0)
    cov = centred.T @ centred / (n - 1)
    return (cov + cov.T) / 2


def matrix_log(m: np.ndarray) -> np.ndarray:
    """Logarithm of one SPD matrix or a stack of them, via ``eigh``."""
    m = np.asarray(m, dtype=np.float64)
    evals, evecs = np.linalg.eigh((m + np.swapaxes(m, -1, -2)) / 2)
    if np.any(evals <= 0) or not np.all(np.isfinite(evals)):
        raise SpdError(f"matrix is not positive definite (smallest eigenvalue {evals.min():.3e})")
    out = (evecs * np.log(evals)[..., None, :]) @ np.swapaxes(evecs, -1, -2)
    return (out + np.swapaxes(out, -1, -2)) / 2


def matrix_exp(s: np.ndarray) -> np.ndarray:
    """Exponential of a symmetric matrix (or stack), inverse of :func:`matrix_log`."""
    s = np.asarray(s, dtype=np.float64)
    evals, evecs = np.linalg.eigh((s + np.swapaxes(s, -1, -2)) / 2)
    out = (evecs * np.exp(evals)[..., None, :]) @ np.swapaxes(evecs, -1, -2)
    return (out + np.swapaxes(out, -1, -2)) / 2


def led_distance(la: np.ndarray, lb: np.ndarray) -> float:
    """Frobenius norm of the difference between two stored matrix logarithms."""
    la = np.asarray(la, dtype=np.float64)
    lb = np.asarray(lb, dtype=np.float64)
    if la.shape != lb.shape:
        raise ParameterError(f"log matrices differ in shape: {la.shape} vs {lb.shape}")
    return float(np.sqrt(np.sum((la - lb) ** 2)))


def default_epsilon(reduced: HsiCube, scale: float = 1e-3) -> float:
    """``scale`` times the mean band variance, or ``scale`` itself for a flat cube."""
    if scale <= 0:
        raise ParameterError(f"epsilon scale must be > 0, got {scale}")
    x = reduced.spectra().astype(np.float64)
    mean_var = float(x.var(axis=0, ddof=1).mean()) if x.shape[0] > 1 else 0.0
    # Variance at rounding level means the cube is flat.
    floor = (64 * np.finfo(np.float64).eps * max(1.0, float(np.abs(x).max()))) ** 2
    return scale * mean_var if mean_var > floor else scale


def _window_shifts(h: int, w: int, r: int):
    """Yield (dst, src) slice pairs covering every in-bounds offset of a (2r+1)^2 window."""
    for dy in range(-r, r + 1):
        ys = slice(max(0, -dy), min(h, h - dy)), slice(max(0, dy), min(h, h + dy))
        if ys[0].start >= ys[0].stop:
            continue
        for dx in range(-r, r + 1):
            xs = slice(max(0, -dx), min(w, w - dx)), slice(max(0, dx), min(w, w + dx))
            if xs[0].start >= xs[0].stop:
                continue
            yield (ys[0], xs[0]), (ys[1], xs[1])


def local_covariances(reduced: HsiCube, window: int, epsilon: float) -> np.ndarray:
    """Regularised window covariances for every pixel, ``(H, W, A, A)``.

    Two passes over the window offsets (means, then centred outer products), so
    each pixel sees exactly the same arithmetic as :func:`local_covariance` up to
    summation order.
    """
    _check_window(window)
    if epsilon <= 0:
        raise ParameterError(f"epsilon must be > 0, got {epsilon}")
    x = reduced.data.astype(np.float64)
    h, w, a = x.shape
    r = window // 2
    shifts = list(_window_shifts(h, w, r))

    counts = np.zeros((h, w))
    sums = np.zeros((h, w, a))
    for dst, src in shifts:
        counts[dst] += 1
        sums[dst] += x[src]
    means = sums / counts[..., None]

    scatter = np.zeros((h, w, a, a))
    for dst, src in shifts:
        d = x[src] - means[dst]
        scatter[dst] += d[..., :, None] * d[..., None, :]
    denom = np.maximum(counts - 1, 1)[..., None, None]
    cov = np.where((counts > 1)[..., None, None], scatter / denom, 0.0)
    cov = (cov + np.swapaxes(cov, -1, -2)) / 2
    return cov + epsilon * np.eye(a)


def build_log_cov_field(
    reduced: HsiCube,
    window: int = 5,
    epsilon: float | None = None,
    epsilon_scale: float = 1e-3,
) -> LogCovField:
    """Matrix logarithms of the local covariances of every pixel."""
    if epsilon is None:
        epsilon = default_epsilon(reduced, epsilon_scale)
    covs = local_covariances(reduced, window, epsilon)
    return LogCovField(matrix_log(covs), window, float(epsilon))


def half_vectorize(logs: np.ndarray) -> np.ndarray:
    """Isometric half-vectorisation of symmetric matrices (off-diagonals scaled by sqrt 2).

    Euclidean distances and means of the result equal Frobenius distances and
    element-wise means of the matrices.
    """
    a = logs.shape[-1]
    iu = np.triu_indices(a)
    scale = np.where(iu[0] == iu[1], 1.0, np.sqrt(2.0))
    return logs[..., iu[0], iu[1]] * scale


def unhalf_vectorize(vecs: np.ndarray, dim: int) -> np.ndarray:
    iu = np.triu_indices(dim)
    scale = np.where(iu[0] == iu[1], 1.0, np.sqrt(2.0))
    out = np.zeros(vecs.shape[:-1] + (dim, dim))
    out[..., iu[0], iu[1]] = vecs / scale
    out[..., iu[1], iu[0]] = vecs / scale
    return out
