import math

import numpy as np
import pytest
from scipy import ndimage

from hsgc import covfield, dimred, superpix, synth
from hsgc.errors import ParameterError
from hsgc.hsi_io import HsiCube
from hsgc.metrics import boundary_map, boundary_recall
from hsgc.superpix import Centroid, SegmentParams


def _field_of(cube, window=5):
    return covfield.build_log_cov_field(cube, window)


@pytest.fixture(scope="module")
def two_class():
    cube, truth = synth.generate(synth.SynthSpec(width=64, height=64, bands=16, classes=2, region_seeds=2,
                                                 noise_sigma=0.05, rng_seed=7))
    reduced = dimred.project(cube, dimred.fit_pca(cube, 0.98))
    return _field_of(reduced), truth


def test_density_constant_cube():
    field = _field_of(HsiCube(np.full((12, 10, 2), 0.3)))
    d = superpix.content_density(field)
    np.testing.assert_array_equal(d.g, 1.0)


def test_density_formula_at_clip_point(synth_field):
    d = superpix.content_density(synth_field, lam=4.0, g_min=0.1)
    # pixels at or above the normalising percentile get 1 / (1 + 4)
    assert d.g.min() == pytest.approx(0.2)
    d = superpix.content_density(synth_field, lam=4.0, g_min=0.5)
    assert d.g.min() == 0.5
    assert np.all((d.g >= 0.5) & (d.g <= 1.0))


def test_density_lower_on_boundaries(two_class):
    field, truth = two_class
    d = superpix.content_density(field, lam=4.0, g_min=0.05)
    edge = boundary_map(truth.labels)
    interior = ~ndimage.binary_dilation(edge, iterations=6)
    assert d.g[edge].max() < d.g[interior].min()


def test_density_parameter_checks(synth_field):
    with pytest.raises(ParameterError):
        superpix.content_density(synth_field, smoothing=4)
    with pytest.raises(ParameterError):
        superpix.content_density(synth_field, g_min=0.0)


def test_clustering_distance_examples():
    log = np.diag([0.5, -1.0])
    c = Centroid(np.array([3.0, 4.0]), log, 1)
    assert superpix.clustering_distance((np.array([3, 4]), log), c, 5.0, 10.0, 8.0) == 0.0
    assert superpix.clustering_distance((np.array([3, 10]), log), c, 5.0, 10.0, 8.0) == math.inf
    # d_spec = 1 and d_spat = S_r with m = 10: D^2 = 1 + 100
    shifted = log + np.diag([1.0, 0.0])
    assert superpix.clustering_distance((np.array([3, 12]), shifted), c, 20.0, 10.0, 8.0) == pytest.approx(101.0)


def test_assign_pixels_matches_pointwise_rule(synth_field, rng):
    field = covfield.LogCovField(synth_field.logs[:20, :24], 5, synth_field.epsilon)
    vec = covfield.half_vectorize(field.logs)
    k = 6
    c_pos = np.column_stack([rng.uniform(0, 23, k), rng.uniform(0, 19, k)])
    c_vec = vec[rng.integers(0, 20, k), rng.integers(0, 24, k)]
    limits = rng.uniform(3, 9, k)
    m, s_r = 10.0, math.sqrt(20 * 24 / k)
    got = superpix.assign_pixels(vec, c_vec, c_pos, limits, (m / s_r) ** 2)
    cents = [Centroid(c_pos[i], covfield.unhalf_vectorize(c_vec[i], field.dim), 1) for i in range(k)]
    for y in range(20):
        for x in range(24):
            d = [superpix.clustering_distance((np.array([x, y]), field.logs[y, x]), c, limits[i], m, s_r)
                 for i, c in enumerate(cents)]
            if np.all(np.isinf(d)):
                d = [superpix.clustering_distance((np.array([x, y]), field.logs[y, x]), c, np.inf, m, s_r)
                     for c in cents]
            best = int(np.argmin(d))
            assert got[y, x] == best or math.isclose(d[got[y, x]], d[best], rel_tol=1e-12)


def test_singleton_partition(rng):
    cube = HsiCube(rng.normal(size=(5, 6, 2)))
    field = _field_of(cube, 3)
    res = superpix.segment(field, 30, superpix.content_density(field, smoothing=1))
    assert res.seg.count == 30
    assert sorted(res.seg.assignment.ravel().tolist()) == list(range(30))
    assert res.objective_trace[-1] == 0.0


def test_constant_cube_four_quadrants():
    field = _field_of(HsiCube(np.full((16, 16, 3), 0.5)))
    res = superpix.segment(field, 4, superpix.content_density(field))
    a = res.seg.assignment
    assert res.seg.count == 4
    quads = [a[:8, :8], a[:8, 8:], a[8:, :8], a[8:, 8:]]
    assert [int(np.unique(q).size) for q in quads] == [1, 1, 1, 1]
    assert len({int(q[0, 0]) for q in quads}) == 4


def test_rejects_too_many_superpixels():
    field = _field_of(HsiCube(np.zeros((3, 3, 1))), 3)
    with pytest.raises(ParameterError):
        superpix.segment(field, 10, superpix.content_density(field))


def test_two_region_boundary_recall(two_class):
    field, truth = two_class
    # Log-covariance distances are a few units, so the spatial weight must be small
    # for borders to follow the descriptor rather than the seed grid.
    res = superpix.segment(field, 32, superpix.content_density(field), SegmentParams(compactness=3.0))
    assert boundary_recall(res.seg.assignment, truth.labels, 2) >= 0.95


def _check_partition(res, h, w):
    a = res.seg.assignment
    assert a.shape == (h, w)
    assert a.min() == 0 and a.max() == res.seg.count - 1
    assert np.all(res.seg.sizes() > 0)
    assert superpix.is_four_connected(res.seg)


@pytest.mark.parametrize("k,m", [(16, 10.0), (64, 5.0), (150, 20.0)])
def test_invariants_on_fixture(synth_field, k, m):
    density = superpix.content_density(synth_field)
    res = superpix.segment(synth_field, k, density, SegmentParams(compactness=m, max_iters=10, tol=0.0))
    _check_partition(res, 64, 64)
    assert res.seg.count <= k
    trace = np.array(res.objective_trace)
    assert np.all(trace[1:] <= trace[:-1] * (1 + 1e-12))
    assert sum(c.member_count for c in res.centroids) == 64 * 64


def test_deterministic(synth_field):
    density = superpix.content_density(synth_field)
    a = superpix.segment(synth_field, 40, density)
    b = superpix.segment(synth_field, 40, density)
    np.testing.assert_array_equal(a.seg.assignment, b.seg.assignment)
    assert a.objective_trace == b.objective_trace


def test_centroid_update_is_optimal(synth_field, rng):
    res = superpix.segment(synth_field, 30, superpix.content_density(synth_field))
    vec = covfield.half_vectorize(synth_field.logs)
    a = res.seg.assignment
    s_r = math.sqrt(64 * 64 / 30)
    w = (10.0 / s_r) ** 2
    c_vec = np.array([covfield.half_vectorize(c.log_cov) for c in res.centroids])
    c_pos = np.array([c.position for c in res.centroids])
    base = superpix.objective(vec, a, c_vec, c_pos, w)
    for _ in range(20):
        pv = c_vec + rng.normal(scale=0.05, size=c_vec.shape)
        pp = c_pos + rng.normal(scale=0.5, size=c_pos.shape)
        assert superpix.objective(vec, a, pv, pp, w) >= base


def test_enforce_connectivity_reassigns_orphans():
    a = np.array([
        [0, 0, 1, 1],
        [0, 0, 1, 0],
        [2, 2, 1, 1],
        [2, 2, 2, 2],
    ])
    seg = superpix.enforce_connectivity(a)
    assert superpix.is_four_connected(seg)
    # the stray 0 at (1, 3) is surrounded by label 1 and joins it
    assert seg.assignment[1, 3] == seg.assignment[0, 2]
    assert seg.count == 3


def test_enforce_connectivity_drops_empty_labels():
    seg = superpix.enforce_connectivity(np.array([[0, 0, 5, 5]]))
    np.testing.assert_array_equal(seg.assignment, [[0, 0, 1, 1]])


def test_grid_seeds_respect_count():
    for w, h, k in [(10, 10, 3), (16, 16, 5), (7, 3, 21), (64, 64, 64)]:
        seeds = superpix.grid_seeds(w, h, k)
        assert 1 <= len(seeds) <= k
        assert np.all((seeds[:, 0] >= 0) & (seeds[:, 0] <= w - 1))
