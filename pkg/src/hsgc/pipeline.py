"""End-to-end HSGC run: reduce, segment, describe, connect, propagate, score."""
from __future__ import annotations

import contextlib
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import covfield, dimred, features, graph, hsi_io, lgc, metrics, superpix
from .config import PipelineConfig
from .errors import HsgcError
from .hsi_io import HsiCube, LabelMap

log = logging.getLogger(__name__)


class PipelineError(HsgcError):
    """A stage failed; ``stage`` names it."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


@contextlib.contextmanager
def stage(name: str):
    try:
        yield
    except PipelineError:
        raise
    except (HsgcError, ValueError, ArithmeticError, OSError) as exc:
        raise PipelineError(name, exc) from exc


@dataclass
class Segmentation:
    """Everything that does not depend on the seed draw."""

    reduced: HsiCube
    pca: dimred.PcaModel
    seg_result: superpix.SegResult
    features: features.SuperpixelFeatures
    graph: graph.SimilarityGraph

    @property
    def seg(self) -> hsi_io.SegMap:
        return self.seg_result.seg


@dataclass
class PipelineRun:
    prep: Segmentation
    reports: list[metrics.EvalReport] = field(default_factory=list)
    results: list[lgc.PropagationResult] = field(default_factory=list)
    seeds: list[LabelMap] = field(default_factory=list)

    @property
    def summary(self) -> metrics.TrialSummary:
        return metrics.summarize(self.reports)


def prepare(config: PipelineConfig, cube: HsiCube) -> Segmentation:
    """Run every seed-independent stage."""
    with stage("pca"):
        model = dimred.fit_pca(cube, config.variance_target, config.max_bands)
        # Stored precision, so stages resumed from a dumped reduced cube agree exactly.
        reduced = HsiCube(dimred.project(cube, model).data.astype(np.float32))
        log.info("pca: %d -> %d bands (explained %.4f)", cube.bands, model.n_components, model.explained_ratio)
    with stage("covfield"):
        field_ = covfield.build_log_cov_field(reduced, config.cov_window, epsilon_scale=config.cov_epsilon_scale)
    with stage("segment"):
        density = superpix.content_density(field_, config.density_smoothing, config.density_lambda, config.density_gmin)
        k = config.superpixel_count(cube.width, cube.height)
        params = superpix.SegmentParams(config.compactness, config.max_iters, config.seg_tol)
        seg_result = superpix.segment(field_, k, density, params)
        log.info("segment: K=%d -> %d superpixels, %d iterations", k, seg_result.seg.count,
                 len(seg_result.objective_trace))
    with stage("features"):
        feats = features.extract_features(reduced, seg_result.seg, config.h)
    with stage("graph"):
        g = graph.build_graph(feats, graph.GraphParams(config.beta, config.sigma_s, config.sigma_l, config.knn))
    return Segmentation(reduced, model, seg_result, feats, g)


def run_trial(config: PipelineConfig, prep: Segmentation, truth: LabelMap, seeds: LabelMap):
    with stage("classify"):
        result = lgc.classify(prep.graph, prep.seg, seeds, truth.n_classes,
                              config.alpha, config.lgc_tol, config.lgc_max_iters)
        if not result.converged:
            log.warning("classify: propagation stopped at max_iters with residual %.3e", result.residual)
    with stage("evaluate"):
        report = metrics.evaluate(result.pixel_labels, truth, seeds, config.include_seeds)
    return result, report


def run_pipeline(
    config: PipelineConfig,
    cube: HsiCube,
    truth: LabelMap,
    out_dir: str | Path | None = None,
) -> PipelineRun:
    """Full protocol: ``config.trials`` seed draws over one segmentation and graph.

    Trial ``t`` samples seeds with ``rng_seed + t``.  When ``out_dir`` is given
    the shared intermediates, the first trial's seeds / F / prediction / render
    and the report files are written there.
    """
    if (truth.height, truth.width) != (cube.height, cube.width):
        raise PipelineError("input", ValueError("ground truth and cube differ in size"))
    with stage("input"):
        if truth.n_classes < 1:
            raise ValueError("ground truth has no labelled pixels")
    prep = prepare(config, cube)
    run = PipelineRun(prep)
    for t in range(config.trials):
        with stage("seeds"):
            seeds = metrics.sample_seeds(truth, config.labels_per_class, config.rng_seed + t)
        result, report = run_trial(config, prep, truth, seeds)
        log.info("trial %d: oa=%.4f aa=%.4f kappa=%.4f", t, report.oa, report.aa, report.kappa)
        run.seeds.append(seeds)
        run.results.append(result)
        run.reports.append(report)
    if out_dir is not None:
        write_artifacts(run, config, Path(out_dir))
    return run


def format_report(run: PipelineRun, config: PipelineConfig) -> str:
    prep = run.prep
    parts = [
        f"bands_kept: {prep.pca.n_components}",
        f"explained_ratio: {prep.pca.explained_ratio:.6f}",
        f"superpixels: {prep.seg.count}",
        f"graph_edges: {len(prep.graph.weights)}",
        f"labels_per_class: {config.labels_per_class}",
    ]
    text = "\n".join(parts) + "\n" + run.summary.to_text()
    for i, r in enumerate(run.reports):
        text += f"trial_{i}: oa={r.oa:.6f} aa={r.aa:.6f} kappa={r.kappa:.6f}\n"
    return text


def write_artifacts(run: PipelineRun, config: PipelineConfig, out: Path) -> None:
    with stage("write"):
        out.mkdir(parents=True, exist_ok=True)
        prep = run.prep
        hsi_io.write_seg_map(prep.seg, out / "segmentation.csv")
        hsi_io.render_boundaries(prep.seg, prep.reduced.data[:, :, 0], out / "segmentation.ppm")
        features.write_features_csv(prep.features, out / "features.csv")
        graph.write_graph_csv(prep.graph, out / "graph.csv")
        if run.results:
            hsi_io.write_label_map(run.seeds[0], out / "seeds.csv")
            lgc.write_matrix_csv(run.results[0].F, out / "F.csv")
            hsi_io.write_label_map(run.results[0].pixel_labels, out / "prediction.csv")
            hsi_io.render_class_map(run.results[0].pixel_labels, out / "classification.ppm")
            metrics.write_reports_csv(run.reports, out / "report.csv")
            (out / "report.txt").write_text(format_report(run, config), encoding="utf-8")
        (out / "config.txt").write_text(config.to_text(), encoding="utf-8")
