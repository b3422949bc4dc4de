"""Reading and writing cubes, label maps, segmentation maps and PPM renders.

Binary cube layout (``HSC1``, little-endian)::

    offset  size  field
    0       4     magic b"HSC1"
    4       4     width  (uint32)
    8       4     height (uint32)
    12      4     bands  (uint32)
    16      4*N   float32 samples, N = width*height*bands

Samples are pixel-interleaved in raster order: row ``y`` outer, column ``x``
inner, and all bands of one pixel contiguous.  Label and segmentation maps are
CSV grids with ``height`` lines of ``width`` comma separated integers.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError, FormatError, TruncationError

MAGIC = b"HSC1"
HEADER = struct.Struct("<4sIII")

# Class 0 (unlabelled / unclassified) is always black.
PALETTE: tuple[tuple[int, int, int], ...] = (
    (0, 0, 0),
    (230, 25, 75),
    (60, 180, 75),
    (255, 225, 25),
    (0, 130, 200),
    (245, 130, 48),
    (145, 30, 180),
    (70, 240, 240),
    (240, 50, 230),
    (210, 245, 60),
    (250, 190, 212),
    (0, 128, 128),
    (220, 190, 255),
    (170, 110, 40),
    (255, 250, 200),
    (128, 0, 0),
    (170, 255, 195),
    (128, 128, 0),
    (255, 215, 180),
    (0, 0, 128),
    (128, 128, 128),
    (255, 255, 255),
    (100, 149, 237),
    (255, 99, 71),
)


@dataclass(frozen=True)
class HsiCube:
    """Dense hyperspectral cube stored as an ``(height, width, bands)`` array."""

    data: np.ndarray

    def __post_init__(self) -> None:
        if self.data.ndim != 3:
            raise DataError(f"cube data must be 3-D (height, width, bands), got shape {self.data.shape}")
        h, w, b = self.data.shape
        if w < 1 or h < 1 or b < 1:
            raise DataError(f"cube dimensions must be positive, got W={w} H={h} B={b}")
        if not np.all(np.isfinite(self.data)):
            raise DataError("cube contains non-finite samples")

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def bands(self) -> int:
        return self.data.shape[2]

    def spectra(self) -> np.ndarray:
        """Pixels as rows of an ``(H*W, B)`` matrix in raster order."""
        return self.data.reshape(-1, self.bands)


@dataclass(frozen=True)
class LabelMap:
    """Per-pixel class identifiers; 0 means unlabelled."""

    labels: np.ndarray

    def __post_init__(self) -> None:
        if self.labels.ndim != 2:
            raise FormatError(f"label map must be 2-D, got shape {self.labels.shape}")
        if self.labels.size and self.labels.min() < 0:
            raise FormatError("label map contains negative class identifiers")

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) if self.labels.size else 0

    def classes(self) -> np.ndarray:
        """Sorted distinct non-zero class identifiers."""
        values = np.unique(self.labels)
        return values[values > 0]


@dataclass(frozen=True)
class SegMap:
    """Partition of the pixel grid into ``count`` superpixels ``0..count-1``."""

    assignment: np.ndarray
    count: int

    @property
    def width(self) -> int:
        return self.assignment.shape[1]

    @property
    def height(self) -> int:
        return self.assignment.shape[0]

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment.ravel(), minlength=self.count)

    @classmethod
    def from_assignment(cls, assignment: np.ndarray) -> "SegMap":
        """Build a map after checking that indices are dense (no empty superpixel)."""
        assignment = np.asarray(assignment, dtype=np.int64)
        if assignment.ndim != 2:
            raise FormatError("segmentation map must be 2-D")
        if assignment.min() < 0:
            raise FormatError("segmentation map contains negative indices")
        count = int(assignment.max()) + 1
        if np.any(np.bincount(assignment.ravel(), minlength=count) == 0):
            raise FormatError("segmentation map has empty superpixel indices")
        return cls(assignment, count)


# -- cubes -----------------------------------------------------------------------------


def read_cube(path: str | Path) -> HsiCube:
    raw = Path(path).read_bytes()
    if len(raw) < HEADER.size:
        raise FormatError(f"{path}: file shorter than the {HEADER.size}-byte header")
    magic, width, height, bands = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if width == 0 or height == 0 or bands == 0:
        raise FormatError(f"{path}: zero dimension in header (W={width}, H={height}, B={bands})")
    expected = width * height * bands * 4
    payload = raw[HEADER.size:]
    if len(payload) != expected:
        raise TruncationError(
            f"{path}: payload has {len(payload)} bytes, header announces {expected}"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(height, width, bands)
    if not np.all(np.isfinite(data)):
        raise DataError(f"{path}: cube contains non-finite samples")
    return HsiCube(data.astype(np.float32))


def write_cube(cube: HsiCube, path: str | Path) -> None:
    h, w, b = cube.data.shape
    if w < 1 or h < 1 or b < 1:
        raise DataError(f"refusing to write cube with W={w} H={h} B={b}")
    payload = np.ascontiguousarray(cube.data, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, w, h, b))
        fh.write(payload)


# -- CSV grids -------------------------------------------------------------------------


def _read_int_grid(path: str | Path, width: int | None, height: int | None) -> np.ndarray:
    text = Path(path).read_text(encoding="utf-8")
    lines = [line for line in text.splitlines() if line.strip()]
    rows: list[list[int]] = []
    for lineno, line in enumerate(lines, start=1):
        try:
            row = [int(tok) for tok in line.split(",")]
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: non-integer entry ({exc})") from None
        if rows and len(row) != len(rows[0]):
            raise FormatError(f"{path}:{lineno}: ragged row ({len(row)} columns, expected {len(rows[0])})")
        if width is not None and len(row) != width:
            raise FormatError(f"{path}:{lineno}: {len(row)} columns, expected width {width}")
        if any(v < 0 for v in row):
            raise FormatError(f"{path}:{lineno}: negative value")
        rows.append(row)
    if not rows:
        raise FormatError(f"{path}: empty grid")
    if height is not None and len(rows) != height:
        raise FormatError(f"{path}: {len(rows)} rows, expected height {height}")
    return np.asarray(rows, dtype=np.int64)


def _write_int_grid(grid: np.ndarray, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in grid:
            fh.write(",".join(str(int(v)) for v in row))
            fh.write("\n")


def read_label_map(path: str | Path, width: int | None = None, height: int | None = None) -> LabelMap:
    """Read a CSV label grid; ``width``/``height`` are checked when given."""
    return LabelMap(_read_int_grid(path, width, height))


def write_label_map(labels: LabelMap, path: str | Path) -> None:
    _write_int_grid(labels.labels, path)


def read_seg_map(path: str | Path, width: int | None = None, height: int | None = None) -> SegMap:
    return SegMap.from_assignment(_read_int_grid(path, width, height))


def write_seg_map(seg: SegMap, path: str | Path) -> None:
    _write_int_grid(seg.assignment, path)


# -- PPM -------------------------------------------------------------------------------


def write_ppm(rgb: np.ndarray, path: str | Path) -> None:
    """Write an ``(H, W, 3)`` uint8 array as binary PPM (P6, maxval 255)."""
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise FormatError(f"expected (H, W, 3) image, got {rgb.shape}")
    h, w, _ = rgb.shape
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (w, h))
        fh.write(np.ascontiguousarray(rgb, dtype=np.uint8).tobytes())


def colorize(labels: LabelMap, palette: Sequence[tuple[int, int, int]] = PALETTE) -> np.ndarray:
    table = np.asarray(palette, dtype=np.uint8)
    top = labels.n_classes
    if top >= len(table):
        raise FormatError(f"class {top} outside palette of {len(table)} entries")
    return table[labels.labels]


def render_class_map(
    labels: LabelMap,
    path: str | Path,
    palette: Sequence[tuple[int, int, int]] = PALETTE,
) -> None:
    write_ppm(colorize(labels, palette), path)


def render_boundaries(seg: SegMap, background: np.ndarray, path: str | Path) -> None:
    """Overlay superpixel borders in red on a grey image scaled from ``background``."""
    bg = np.asarray(background, dtype=np.float64)
    lo, hi = float(bg.min()), float(bg.max())
    grey = np.zeros_like(bg) if hi <= lo else (bg - lo) / (hi - lo)
    rgb = np.repeat((grey * 255).round().astype(np.uint8)[..., None], 3, axis=2)
    a = seg.assignment
    edge = np.zeros(a.shape, dtype=bool)
    edge[:, :-1] |= a[:, :-1] != a[:, 1:]
    edge[:-1, :] |= a[:-1, :] != a[1:, :]
    rgb[edge] = (255, 0, 0)
    write_ppm(rgb, path)
