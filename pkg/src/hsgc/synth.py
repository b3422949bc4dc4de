"""Synthetic hyperspectral scenes with Voronoi class regions.

Random draws come from NumPy's PCG64 generator (``numpy.random.default_rng``)
in a fixed order: site pixels, site classes, class signatures (including any
redraws), then per-pixel noise.  The committed fixture files, not this stream,
are what other tools should compare against.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .hsi_io import HsiCube, LabelMap

_MAX_REDRAWS = 100
_CHUNK = 8192


@dataclass(frozen=True)
class SynthSpec:
    width: int = 64
    height: int = 64
    bands: int = 16
    classes: int = 4
    region_seeds: int = 24
    noise_sigma: float = 0.05
    rng_seed: int = 7
    separation: float | None = None  # minimum signature distance; default 0.25*sqrt(bands)

    def __post_init__(self) -> None:
        if min(self.width, self.height, self.bands) < 1:
            raise ParameterError("width, height and bands must be >= 1")
        if self.classes < 2:
            raise ParameterError(f"need at least 2 classes, got {self.classes}")
        if self.region_seeds < self.classes:
            raise ParameterError("region_seeds must be >= classes")
        if self.region_seeds > self.width * self.height:
            raise ParameterError(f"region_seeds {self.region_seeds} exceeds pixel count {self.width * self.height}")
        if self.noise_sigma < 0:
            raise ParameterError("noise_sigma must be >= 0")

    @property
    def min_separation(self) -> float:
        return self.separation if self.separation is not None else 0.25 * math.sqrt(self.bands)


def _signatures(rng: np.random.Generator, classes: int, bands: int, separation: float) -> np.ndarray:
    """Random-walk spectra rescaled to [0, 1], redrawn until pairwise distances clear ``separation``."""
    for _ in range(_MAX_REDRAWS):
        if bands == 1:
            sig = rng.uniform(0.0, 1.0, size=(classes, 1))
        else:
            walk = np.cumsum(rng.uniform(-1.0, 1.0, size=(classes, bands)), axis=1)
            lo = walk.min(axis=1, keepdims=True)
            hi = walk.max(axis=1, keepdims=True)
            sig = (walk - lo) / np.where(hi > lo, hi - lo, 1.0)
        d = np.sqrt(np.sum((sig[:, None] - sig[None]) ** 2, axis=-1))
        if d[np.triu_indices(classes, 1)].min() >= separation:
            return sig
    raise ParameterError(f"could not draw {classes} signatures {separation} apart in {_MAX_REDRAWS} tries")


def voronoi_labels(width: int, height: int, sites_xy: np.ndarray) -> np.ndarray:
    """Index of the nearest site per pixel, ties to the lowest site index."""
    ys, xs = np.divmod(np.arange(width * height), width)
    pix = np.column_stack([xs, ys]).astype(np.float64)
    out = np.empty(width * height, dtype=np.int64)
    for start in range(0, len(pix), _CHUNK):
        p = pix[start:start + _CHUNK]
        d2 = np.sum((p[:, None, :] - sites_xy[None]) ** 2, axis=-1)
        out[start:start + _CHUNK] = np.argmin(d2, axis=1)
    return out.reshape(height, width)


def generate(spec: SynthSpec) -> tuple[HsiCube, LabelMap]:
    rng = np.random.default_rng(spec.rng_seed)
    w, h = spec.width, spec.height
    flat_sites = rng.choice(w * h, size=spec.region_seeds, replace=False)
    sites = np.column_stack([flat_sites % w, flat_sites // w]).astype(np.float64)
    site_class = np.concatenate([
        rng.permutation(spec.classes) + 1,
        rng.integers(1, spec.classes + 1, size=spec.region_seeds - spec.classes),
    ])
    sig = _signatures(rng, spec.classes, spec.bands, spec.min_separation)

    truth = site_class[voronoi_labels(w, h, sites)]
    cube = sig[truth - 1]
    if spec.noise_sigma > 0:
        cube = cube + rng.normal(0.0, spec.noise_sigma, size=cube.shape)
    return HsiCube(cube.astype(np.float32)), LabelMap(truth)


def class_signatures(spec: SynthSpec) -> np.ndarray:
    """The noise-free class spectra ``generate`` uses for ``spec`` (row ``c-1`` is class ``c``)."""
    rng = np.random.default_rng(spec.rng_seed)
    rng.choice(spec.width * spec.height, size=spec.region_seeds, replace=False)
    rng.permutation(spec.classes)
    rng.integers(1, spec.classes + 1, size=spec.region_seeds - spec.classes)
    return _signatures(rng, spec.classes, spec.bands, spec.min_separation)
