"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

The lines are printed in the terminal summary (see ``conftest.py``).
"""
import time

import numpy as np

from hsgc import cli, covfield, dimred, lgc, metrics, pipeline, superpix, synth
from hsgc.config import PipelineConfig
from hsgc.graph import SimilarityGraph
from hsgc.hsi_io import HsiCube, read_label_map

from oracles import expm_taylor, lgc_dense_oracle, loop_covariance, random_spd


def test_criterion_1_led_metric_suite(criterion):
    r = np.random.default_rng(1)
    start = time.perf_counter()
    worst_metric = 0.0
    worst_roundtrip = 0.0
    worst_oracle = 0.0
    for case in range(1000):
        dim = int(r.integers(2, 13))
        a, b, c = (random_spd(r, dim) for _ in range(3))
        la, lb, lc = covfield.matrix_log(np.stack([a, b, c]))
        dab = covfield.led_distance(la, lb)
        dba = covfield.led_distance(lb, la)
        dac = covfield.led_distance(la, lc)
        dcb = covfield.led_distance(lc, lb)
        worst_metric = max(worst_metric, abs(dab - dba), covfield.led_distance(la, la),
                           dab - (dac + dcb))
        norm = np.linalg.norm(a)
        worst_roundtrip = max(worst_roundtrip, np.linalg.norm(covfield.matrix_exp(la) - a) / norm)
        if case % 10 == 0:
            worst_oracle = max(worst_oracle, np.linalg.norm(expm_taylor(la) - a) / norm)
    elapsed = time.perf_counter() - start
    ok = worst_metric <= 1e-9 and worst_roundtrip <= 1e-8 and worst_oracle <= 1e-8 and elapsed < 5.0
    criterion(1, ok, f"LED axioms max violation {worst_metric:.1e}, log/exp round trip {worst_roundtrip:.1e}, "
                     f"vs Taylor exp {worst_oracle:.1e}, {elapsed:.2f}s")
    assert worst_metric <= 1e-9
    assert worst_roundtrip <= 1e-8 and worst_oracle <= 1e-8
    assert elapsed < 5.0


def _oracle_choice(evals, target):
    total = sum(evals)
    running = 0.0
    for i, v in enumerate(evals):
        running += v
        if running / total >= target:
            return i + 1
    return len(evals)


def test_criterion_2_pca_oracle(criterion):
    r = np.random.default_rng(2)
    worst = 0.0
    mismatches = 0
    cases = 300
    for _ in range(cases):
        # a few strong directions plus noise, so the kept count varies
        rank = int(r.integers(1, 6))
        basis = r.normal(size=(rank, 6)) * r.uniform(0.2, 3.0, size=(rank, 1))
        x = r.normal(size=(50, rank)) @ basis + r.normal(scale=r.uniform(0.01, 0.3), size=(50, 6))
        cube = HsiCube(x.reshape(5, 10, 6))
        model = dimred.fit_pca(cube, 0.98)
        evals = np.sort(np.real(np.linalg.eigvals(loop_covariance(x))))[::-1]
        a = _oracle_choice(evals.tolist(), 0.98)
        mismatches += a != model.n_components
        k = min(a, model.n_components)
        worst = max(worst, float(np.max(np.abs(model.eigenvalues[:k] - evals[:k]) / max(1.0, evals[0]))))
    ok = worst <= 1e-8 and mismatches == 0
    criterion(2, ok, f"{cases} cubes, eigenvalue error {worst:.1e}, kept-count mismatches {mismatches}")
    assert mismatches == 0
    assert worst <= 1e-8


def test_criterion_3_superpixel_descent(criterion, synth_reduced):
    r = np.random.default_rng(3)
    start = time.perf_counter()
    failures = []
    fields = {w: covfield.build_log_cov_field(synth_reduced, w) for w in (3, 5, 7)}
    for draw in range(20):
        window = int(r.choice([3, 5, 7]))
        k = int(r.integers(16, 400))
        params = superpix.SegmentParams(compactness=float(r.uniform(0.5, 40.0)),
                                        max_iters=int(r.integers(3, 15)), tol=0.0)
        field = fields[window]
        density = superpix.content_density(field, lam=float(r.uniform(0.0, 8.0)), g_min=float(r.uniform(0.2, 1.0)))
        res = superpix.segment(field, k, density, params)
        trace = np.array(res.objective_trace)
        a = res.seg.assignment
        partition = a.shape == (64, 64) and a.min() == 0 and a.max() == res.seg.count - 1 \
            and np.all(np.bincount(a.ravel()) > 0)
        if np.any(np.diff(trace) > 0) or not partition or not superpix.is_four_connected(res.seg):
            failures.append(draw)
    elapsed = time.perf_counter() - start
    ok = not failures and elapsed < 30.0
    criterion(3, ok, f"20 draws, failing draws {failures}, {elapsed:.1f}s")
    assert not failures
    assert elapsed < 30.0


def test_criterion_4_boundary_recall(criterion, synth_field, synth_truth):
    res = superpix.segment(synth_field, 64, superpix.content_density(synth_field))
    recall = metrics.boundary_recall(res.seg.assignment, synth_truth.labels, tolerance=2)
    criterion(4, recall >= 0.95, f"boundary recall {recall:.4f} at 2 px, K=64 ({res.seg.count} superpixels)")
    assert recall >= 0.95


def _random_connected_graph(r, n):
    edges = {}
    order = r.permutation(n)
    for a in range(1, n):
        i, j = sorted((int(order[a]), int(order[r.integers(0, a)])))
        edges[i, j] = r.uniform(0.01, 1.0)
    for _ in range(int(r.integers(0, 3 * n))):
        i, j = sorted(r.choice(n, size=2, replace=False).tolist())
        edges[i, j] = r.uniform(0.01, 1.0)
    return [(i, j, w) for (i, j), w in sorted(edges.items())]


def test_criterion_5_lgc_oracle(criterion):
    r = np.random.default_rng(5)
    alpha = 0.99
    worst = 0.0
    worst_decay = 0.0
    for _ in range(200):
        n = int(r.integers(5, 51))
        c = int(r.integers(2, 6))
        edges = _random_connected_graph(r, n)
        Y = np.zeros((n, c))
        for node in r.choice(n, size=int(r.integers(1, n // 2 + 1)), replace=False):
            Y[node, r.integers(0, c)] = 1.0
        i, j, w = (np.array(v) for v in zip(*edges))
        S, _ = lgc.normalized_affinity(SimilarityGraph(n, i, j, w, 0.9, 1.0, 1.0, 1))
        p = lgc.propagate(S, Y, alpha=alpha)
        worst = max(worst, float(np.max(np.abs(p.F - lgc_dense_oracle(n, edges, Y, alpha)))))
        trace = np.array(p.residual_trace)
        worst_decay = max(worst_decay, float(np.max(trace / (alpha ** np.arange(len(trace)) * trace[0]))))
    ok = worst <= 1e-6 and worst_decay <= 1 + 1e-9
    criterion(5, ok, f"200 graphs, max-norm error {worst:.1e}, worst residual / alpha^t bound {worst_decay:.9f}")
    assert worst <= 1e-6
    assert worst_decay <= 1 + 1e-9


def test_criterion_6_end_to_end_accuracy(criterion, synth_cube, synth_truth):
    start = time.perf_counter()
    ten = pipeline.run_pipeline(PipelineConfig(labels_per_class=10, trials=10), synth_cube, synth_truth).summary
    three = pipeline.run_pipeline(PipelineConfig(labels_per_class=3, trials=10), synth_cube, synth_truth).summary
    elapsed = time.perf_counter() - start
    ok = ten.mean["oa"] >= 0.95 and ten.mean["kappa"] >= 0.93 and three.mean["oa"] >= 0.85 and elapsed < 120
    criterion(6, ok, f"10 labels: OA {ten.mean['oa']:.4f} kappa {ten.mean['kappa']:.4f}; "
                     f"3 labels: OA {three.mean['oa']:.4f}; {elapsed:.1f}s (need 0.95 / 0.93 / 0.85)")
    assert elapsed < 120
    assert ten.mean["oa"] >= 0.95
    assert ten.mean["kappa"] >= 0.93
    assert three.mean["oa"] >= 0.85


def test_criterion_7_metrics_arithmetic(criterion):
    oa, _, kappa = metrics.scores_from_confusion(np.array([[30, 20], [10, 40]]))
    exact = oa == 0.7 and kappa == 0.4
    r = np.random.default_rng(7)
    worst = 0.0
    for _ in range(100):
        c = int(r.integers(2, 9))
        conf = r.integers(0, 50, size=(c, c))
        conf[0, 0] += 1
        perm = r.permutation(c)
        a = np.array(metrics.scores_from_confusion(conf))
        b = np.array(metrics.scores_from_confusion(conf[np.ix_(perm, perm)]))
        worst = max(worst, float(np.max(np.abs(a - b))))
    ok = exact and worst <= 1e-12
    criterion(7, ok, f"oa {oa!r}, kappa {kappa!r}; permutation drift {worst:.1e} over 100 matrices")
    assert oa == 0.7
    assert kappa == 0.4
    assert worst <= 1e-12


def test_criterion_8_converted_dumps_run_protocol(criterion, tmp_path, capsys):
    # Stand-in for an external scene: band-first array, unlabelled background (0) in the truth.
    cube, truth = synth.generate(synth.SynthSpec(width=40, height=30, bands=48, classes=6, region_seeds=14,
                                                 noise_sigma=0.03, rng_seed=21))
    gt = truth.labels.copy()
    gt[np.random.default_rng(0).uniform(size=gt.shape) < 0.3] = 0
    np.save(tmp_path / "scene.npy", np.transpose(cube.data, (2, 0, 1)))
    np.save(tmp_path / "scene_gt.npy", gt.astype(np.uint8))
    assert cli.main(["convert", "--input", str(tmp_path / "scene.npy"), "--output", str(tmp_path / "scene.hsc"),
                     "--layout", "bhw"]) == 0
    assert cli.main(["convert", "--kind", "labels", "--input", str(tmp_path / "scene_gt.npy"),
                     "--output", str(tmp_path / "scene_gt.csv")]) == 0
    assert np.array_equal(read_label_map(tmp_path / "scene_gt.csv").labels, gt)
    capsys.readouterr()
    results = {}
    for per_class in (3, 7, 10, 20):
        out = tmp_path / f"run_{per_class}"
        code = cli.main(["pipeline", "--cube", str(tmp_path / "scene.hsc"), "--truth", str(tmp_path / "scene_gt.csv"),
                         "--out", str(out), "--labels-per-class", str(per_class), "--trials", "10",
                         "--superpixels", "120"])
        text = capsys.readouterr().out
        rows = (out / "report.csv").read_text().splitlines() if code == 0 else []
        results[per_class] = code == 0 and "trials: 10" in text and len(rows) == 11
    ok = all(results.values())
    criterion(8, ok, "converted band-first dump, 10 trials at " +
                     ", ".join(f"{k} labels {'ok' if v else 'failed'}" for k, v in results.items()))
    assert ok
