"""Command line entry point: ``hsgc <subcommand> ...``.

Every pipeline stage is a subcommand reading and writing the on-disk formats,
so a run can be resumed from any dumped intermediate.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import covfield, dimred, features, graph, hsi_io, lgc, metrics, pipeline, superpix, synth
from .config import PipelineConfig, parse_config, parse_value
from .errors import HsgcError

log = logging.getLogger("hsgc")


def _config_from_args(args: argparse.Namespace) -> PipelineConfig:
    cfg = parse_config(args.config) if getattr(args, "config", None) else PipelineConfig()
    overrides = {}
    for f in fields(PipelineConfig):
        raw = getattr(args, f"cfg_{f.name}", None)
        if raw is not None:
            overrides[f.name] = parse_value(f.name, raw)
    return cfg.replace(**overrides)


def _add_config_flags(p: argparse.ArgumentParser, names: list[str] | None = None) -> None:
    for f in fields(PipelineConfig):
        if names is not None and f.name not in names:
            continue
        p.add_argument(f"--{f.name.replace('_', '-')}", dest=f"cfg_{f.name}", metavar="VALUE",
                       help=f"override {f.name} (default {f.default!r})")


# -- subcommands -------------------------------------------------------------------------


def cmd_convert(args) -> int:
    arr = np.load(args.input)
    if args.kind == "labels":
        if arr.ndim != 2:
            raise HsgcError(f"label array must be 2-D, got shape {arr.shape}")
        hsi_io.write_label_map(hsi_io.LabelMap(arr.astype(np.int64)), args.output)
        return 0
    if arr.ndim != 3:
        raise HsgcError(f"cube array must be 3-D, got shape {arr.shape}")
    order = {"hwb": (0, 1, 2), "bhw": (1, 2, 0), "whb": (1, 0, 2)}[args.layout]
    hsi_io.write_cube(hsi_io.HsiCube(np.transpose(arr, order).astype(np.float32)), args.output)
    return 0


def cmd_synth(args) -> int:
    spec = synth.SynthSpec(args.width, args.height, args.bands, args.classes, args.sites,
                           args.noise_sigma, args.rng_seed)
    cube, truth = synth.generate(spec)
    hsi_io.write_cube(cube, args.out_cube)
    hsi_io.write_label_map(truth, args.out_truth)
    return 0


def cmd_pca(args) -> int:
    cube = hsi_io.read_cube(args.cube)
    model = dimred.fit_pca(cube, args.variance_target, args.max_bands)
    hsi_io.write_cube(dimred.project(cube, model), args.out)
    print(f"bands_kept: {model.n_components}")
    print(f"explained_ratio: {model.explained_ratio:.6f}")
    return 0


def cmd_segment(args) -> int:
    cfg = _config_from_args(args)
    reduced = hsi_io.read_cube(args.cube)
    field_ = covfield.build_log_cov_field(reduced, cfg.cov_window, epsilon_scale=cfg.cov_epsilon_scale)
    density = superpix.content_density(field_, cfg.density_smoothing, cfg.density_lambda, cfg.density_gmin)
    k = cfg.superpixel_count(reduced.width, reduced.height)
    result = superpix.segment(field_, k, density, superpix.SegmentParams(cfg.compactness, cfg.max_iters, cfg.seg_tol))
    hsi_io.write_seg_map(result.seg, args.out)
    if args.overlay:
        hsi_io.render_boundaries(result.seg, reduced.data[:, :, 0], args.overlay)
    print(f"superpixels: {result.seg.count}")
    print("objective_trace: " + " ".join(f"{q:.6g}" for q in result.objective_trace))
    return 0


def cmd_features(args) -> int:
    reduced = hsi_io.read_cube(args.cube)
    seg = hsi_io.read_seg_map(args.seg, reduced.width, reduced.height)
    h = None if args.h is None else parse_value("h", args.h)
    features.write_features_csv(features.extract_features(reduced, seg, h), args.out)
    return 0


def cmd_graph(args) -> int:
    cfg = _config_from_args(args)
    feats = features.read_features_csv(args.features)
    g = graph.build_graph(feats, graph.GraphParams(cfg.beta, cfg.sigma_s, cfg.sigma_l, cfg.knn))
    graph.write_graph_csv(g, args.out)
    print(f"nodes: {g.node_count}")
    print(f"edges: {len(g.weights)}")
    return 0


def cmd_seeds(args) -> int:
    truth = hsi_io.read_label_map(args.truth)
    hsi_io.write_label_map(metrics.sample_seeds(truth, args.labels_per_class, args.rng_seed), args.out)
    return 0


def cmd_classify(args) -> int:
    cfg = _config_from_args(args)
    g = graph.read_graph_csv(args.graph)
    seg = hsi_io.read_seg_map(args.seg)
    if seg.count != g.node_count:
        raise HsgcError(f"segmentation has {seg.count} superpixels, graph has {g.node_count} nodes")
    seeds = hsi_io.read_label_map(args.seeds, seg.width, seg.height)
    c = args.classes or seeds.n_classes
    result = lgc.classify(g, seg, seeds, c, cfg.alpha, cfg.lgc_tol, cfg.lgc_max_iters)
    hsi_io.write_label_map(result.pixel_labels, args.out)
    if args.f_out:
        lgc.write_matrix_csv(result.F, args.f_out)
    print(f"iterations: {result.iterations}")
    print(f"residual: {result.residual:.3e}")
    print(f"converged: {str(result.converged).lower()}")
    return 0


def cmd_evaluate(args) -> int:
    truth = hsi_io.read_label_map(args.truth)
    pred = hsi_io.read_label_map(args.pred, truth.width, truth.height)
    seeds = hsi_io.read_label_map(args.seeds, truth.width, truth.height) if args.seeds else None
    report = metrics.evaluate(pred, truth, seeds, args.include_seeds)
    sys.stdout.write(report.to_text())
    if args.out:
        Path(args.out).write_text(report.to_text(), encoding="utf-8")
    return 0


def cmd_render(args) -> int:
    hsi_io.render_class_map(hsi_io.read_label_map(args.labels), args.out)
    return 0


def cmd_pipeline(args) -> int:
    cfg = _config_from_args(args)
    cube = hsi_io.read_cube(args.cube)
    truth = hsi_io.read_label_map(args.truth, cube.width, cube.height)
    run = pipeline.run_pipeline(cfg, cube, truth, args.out)
    sys.stdout.write(pipeline.format_report(run, cfg))
    return 0


# -- parser ------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hsgc", description="Hyperspectral superpixel graph classification")
    parser.add_argument("--threads", type=int, default=None, help="cap BLAS/OpenMP worker threads")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="convert a .npy array to an HSC cube or CSV label map")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--kind", choices=("cube", "labels"), default="cube")
    p.add_argument("--layout", choices=("hwb", "bhw", "whb"), default="hwb",
                   help="axis order of the input cube (height, width, bands)")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("synth", help="generate a synthetic cube and ground truth")
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--bands", type=int, default=16)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--sites", type=int, default=24)
    p.add_argument("--noise-sigma", type=float, default=0.05)
    p.add_argument("--rng-seed", type=int, default=7)
    p.add_argument("--out-cube", required=True)
    p.add_argument("--out-truth", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("pca", help="reduce a cube with PCA")
    p.add_argument("--cube", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--variance-target", type=float, default=0.98)
    p.add_argument("--max-bands", type=int, default=None)
    p.set_defaults(func=cmd_pca)

    p = sub.add_parser("segment", help="covariance superpixels of a reduced cube")
    p.add_argument("--cube", required=True, help="reduced cube (output of 'pca')")
    p.add_argument("--out", required=True)
    p.add_argument("--overlay", help="optional PPM with superpixel borders")
    p.add_argument("--config")
    _add_config_flags(p, ["cov_window", "cov_epsilon_scale", "superpixels", "compactness", "max_iters",
                          "seg_tol", "density_lambda", "density_gmin", "density_smoothing"])
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("features", help="per-superpixel features as CSV")
    p.add_argument("--cube", required=True)
    p.add_argument("--seg", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--h", default=None, help="neighbour kernel width (default: median heuristic)")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("graph", help="kNN similarity graph from a features CSV")
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    _add_config_flags(p, ["beta", "sigma_s", "sigma_l", "knn"])
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("seeds", help="sample labelled pixels per class from ground truth")
    p.add_argument("--truth", required=True)
    p.add_argument("--labels-per-class", type=int, default=10)
    p.add_argument("--rng-seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_seeds)

    p = sub.add_parser("classify", help="propagate seed labels over a graph")
    p.add_argument("--graph", required=True)
    p.add_argument("--seg", required=True)
    p.add_argument("--seeds", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int, default=None, help="class count (default: largest seed class)")
    p.add_argument("--f-out", help="optional CSV dump of the propagated matrix")
    p.add_argument("--config")
    _add_config_flags(p, ["alpha", "lgc_tol", "lgc_max_iters"])
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("evaluate", help="OA / AA / kappa of a prediction")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--seeds")
    p.add_argument("--include-seeds", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("render", help="render a label map as PPM")
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("pipeline", help="full run with repeated seed draws")
    p.add_argument("--config")
    p.add_argument("--cube", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.threads:
            from threadpoolctl import threadpool_limits
            with threadpool_limits(limits=args.threads):
                return args.func(args)
        return args.func(args)
    except (HsgcError, OSError, ValueError) as exc:
        print(f"hsgc {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
