"""Accuracy metrics, seed sampling and segmentation boundary recall."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import EvaluationError, ParameterError
from .hsi_io import LabelMap

METRICS = ("oa", "aa", "kappa")


@dataclass(frozen=True)
class EvalReport:
    """Confusion rows are true classes, columns predictions, both indexed by class id.

    Index 0 is "unclassified": its row is always empty and its column collects
    pixels the classifier left at 0, which therefore count as errors.
    """

    confusion: np.ndarray
    oa: float
    aa: float
    kappa: float
    evaluated_pixels: int
    excluded_seed_pixels: int
    skipped_classes: tuple[int, ...] = ()

    def to_text(self) -> str:
        lines = [
            f"oa: {self.oa:.6f}",
            f"aa: {self.aa:.6f}",
            f"kappa: {self.kappa:.6f}",
            f"evaluated_pixels: {self.evaluated_pixels}",
            f"excluded_seed_pixels: {self.excluded_seed_pixels}",
        ]
        if self.skipped_classes:
            lines.append("aa_skipped_classes: " + " ".join(map(str, self.skipped_classes)))
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class TrialSummary:
    trials: int
    mean: dict[str, float]
    std: dict[str, float]

    def to_text(self) -> str:
        lines = [f"trials: {self.trials}"]
        for m in METRICS:
            lines.append(f"{m}_mean: {self.mean[m]:.6f}")
            lines.append(f"{m}_std: {self.std[m]:.6f}")
        return "\n".join(lines) + "\n"


def scores_from_confusion(confusion: np.ndarray) -> tuple[float, float, float]:
    """``(oa, aa, kappa)`` of a square confusion matrix (rows = truth)."""
    conf = np.asarray(confusion, dtype=np.float64)
    n = conf.sum()
    if n <= 0:
        raise EvaluationError("empty confusion matrix")
    oa = float(np.trace(conf) / n)
    rows = conf.sum(axis=1)
    cols = conf.sum(axis=0)
    present = rows > 0
    aa = float(np.mean(np.diag(conf)[present] / rows[present]))
    # (oa - p_e) / (1 - p_e) scaled by n^2, exact for integer counts
    chance = float(np.sum(rows * cols))
    if chance >= n**2:
        kappa = 1.0 if oa >= 1.0 else 0.0
    else:
        kappa = (n * float(np.trace(conf)) - chance) / (n**2 - chance)
    return oa, aa, float(kappa)


def evaluate(pred: LabelMap, truth: LabelMap, seeds: LabelMap | None = None,
             include_seeds: bool = False) -> EvalReport:
    """Score ``pred`` on pixels with a true class, excluding seed pixels unless asked not to."""
    if pred.labels.shape != truth.labels.shape:
        raise EvaluationError("prediction and ground truth differ in size")
    if seeds is not None and seeds.labels.shape != truth.labels.shape:
        raise EvaluationError("seed map and ground truth differ in size")
    if not np.any(pred.labels > 0):
        raise EvaluationError("empty label column space: the prediction assigns no class")
    mask = truth.labels > 0
    seed_mask = np.zeros_like(mask) if seeds is None else (seeds.labels > 0) & mask
    excluded = 0
    if not include_seeds:
        excluded = int(seed_mask.sum())
        mask &= ~seed_mask
    if not mask.any():
        raise EvaluationError("empty evaluation set")
    t = truth.labels[mask]
    p = pred.labels[mask]
    size = int(max(t.max(), p.max())) + 1
    conf = np.zeros((size, size), dtype=np.int64)
    np.add.at(conf, (t, p), 1)
    oa, aa, kappa = scores_from_confusion(conf)
    all_classes = set(truth.classes().tolist())
    skipped = tuple(sorted(all_classes - set(np.unique(t).tolist())))
    return EvalReport(conf, oa, aa, kappa, int(mask.sum()), excluded, skipped)


def sample_seeds(truth: LabelMap, per_class: int, rng_seed: int) -> LabelMap:
    """Draw ``per_class`` pixels of every class uniformly without replacement."""
    if per_class < 0:
        raise ParameterError(f"labels per class must be >= 0, got {per_class}")
    rng = np.random.default_rng(rng_seed)
    flat = truth.labels.ravel()
    out = np.zeros_like(flat)
    for cls in truth.classes():
        idx = np.flatnonzero(flat == cls)
        if idx.size <= per_class:
            if idx.size < per_class:
                warnings.warn(f"class {cls} has only {idx.size} pixels; all used as seeds",
                              RuntimeWarning, stacklevel=2)
            pick = idx
        else:
            pick = rng.choice(idx, size=per_class, replace=False)
        out[pick] = cls
    return LabelMap(out.reshape(truth.labels.shape))


def summarize(reports: list[EvalReport]) -> TrialSummary:
    if not reports:
        raise EvaluationError("no reports to summarize")
    mean, std = {}, {}
    for m in METRICS:
        vals = np.array([getattr(r, m) for r in reports])
        mean[m] = float(vals.mean())
        # equal values give exactly 0 rather than rounding noise
        std[m] = float(vals.std(ddof=1)) if len(vals) > 1 and np.ptp(vals) > 0 else 0.0
    return TrialSummary(len(reports), mean, std)


def write_reports_csv(reports: list[EvalReport], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("trial,oa,aa,kappa,evaluated_pixels,excluded_seed_pixels\n")
        for i, r in enumerate(reports):
            fh.write(f"{i},{r.oa:.9g},{r.aa:.9g},{r.kappa:.9g},{r.evaluated_pixels},{r.excluded_seed_pixels}\n")


def boundary_map(labels: np.ndarray) -> np.ndarray:
    """Pixels with at least one 4-neighbour carrying a different label."""
    a = np.asarray(labels)
    edge = np.zeros(a.shape, dtype=bool)
    dx = a[:, :-1] != a[:, 1:]
    dy = a[:-1, :] != a[1:, :]
    edge[:, :-1] |= dx
    edge[:, 1:] |= dx
    edge[:-1, :] |= dy
    edge[1:, :] |= dy
    return edge


def boundary_recall(segmentation: np.ndarray, truth: np.ndarray, tolerance: int = 2) -> float:
    """Fraction of true boundary pixels within ``tolerance`` (Chebyshev) of a segment boundary."""
    gt = boundary_map(truth)
    if not gt.any():
        return 1.0
    seg = boundary_map(segmentation)
    if tolerance > 0:
        seg = ndimage.binary_dilation(seg, structure=np.ones((2 * tolerance + 1,) * 2, dtype=bool))
    return float(np.sum(gt & seg) / np.sum(gt))
