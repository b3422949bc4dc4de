"""PCA band reduction with an explained-variance cutoff."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, ParameterError
from .hsi_io import HsiCube

# Slack on the cumulative ratio so that exact ties (e.g. 3/4 >= 0.75) survive rounding.
_RATIO_SLACK = 1e-12


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray          # (B,)
    components: np.ndarray    # (A, B), orthonormal rows
    eigenvalues: np.ndarray   # (A,), non-increasing
    explained_ratio: float
    all_eigenvalues: np.ndarray  # (B,), full spectrum for diagnostics

    @property
    def n_components(self) -> int:
        return self.components.shape[0]


def _sample_covariance(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = x.mean(axis=0)
    centred = x - mean
    cov = centred.T @ centred / (x.shape[0] - 1)
    return mean, (cov + cov.T) / 2


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip each row so its largest-magnitude entry is non-negative."""
    idx = np.argmax(np.abs(vectors), axis=1)
    signs = np.sign(vectors[np.arange(len(vectors)), idx])
    signs[signs == 0] = 1.0
    return vectors * signs[:, None]


def choose_n_components(eigenvalues: np.ndarray, variance_target: float) -> int:
    """Smallest count whose leading eigenvalues reach ``variance_target`` of the total."""
    total = float(eigenvalues.sum())
    if total <= 0:
        return 1
    cumulative = np.cumsum(eigenvalues) / total
    hits = np.nonzero(cumulative >= variance_target - _RATIO_SLACK)[0]
    return int(hits[0]) + 1 if hits.size else len(eigenvalues)


def fit_pca(cube: HsiCube, variance_target: float = 0.98, max_bands: int | None = None) -> PcaModel:
    """Fit PCA on every pixel spectrum of ``cube``.

    The band count kept is the smallest one whose explained variance ratio is at
    least ``variance_target``, optionally capped by ``max_bands``.  A cube without
    any variance yields a single unit component and a ratio of 1.
    """
    if not 0 < variance_target <= 1:
        raise ParameterError(f"variance_target must lie in (0, 1], got {variance_target}")
    if max_bands is not None and max_bands < 1:
        raise ParameterError(f"max_bands must be >= 1, got {max_bands}")
    x = cube.spectra().astype(np.float64)
    if x.shape[0] < 2:
        raise DataError("PCA needs at least two pixels")
    mean, cov = _sample_covariance(x)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    vectors = _fix_signs(evecs[:, order].T)

    total = float(evals.sum())
    if total <= 0:
        unit = np.zeros((1, x.shape[1]))
        unit[0, 0] = 1.0
        return PcaModel(mean, unit, np.zeros(1), 1.0, evals)

    n_keep = choose_n_components(evals, variance_target)
    if max_bands is not None:
        n_keep = min(n_keep, max_bands)
    kept = evals[:n_keep]
    return PcaModel(mean, vectors[:n_keep], kept, float(kept.sum() / total), evals)


def project(cube: HsiCube, model: PcaModel) -> HsiCube:
    """Map every pixel spectrum onto the model's component basis."""
    if cube.bands != model.mean.shape[0]:
        raise ParameterError(f"cube has {cube.bands} bands, model expects {model.mean.shape[0]}")
    x = cube.spectra().astype(np.float64)
    scores = (x - model.mean) @ model.components.T
    return HsiCube(scores.reshape(cube.height, cube.width, model.n_components))


def reconstruct(reduced: HsiCube, model: PcaModel) -> np.ndarray:
    """Back-project reduced spectra to band space, ``(H*W, B)``."""
    return reduced.spectra() @ model.components + model.mean
