import numpy as np
import pytest

from hsgc import hsi_io, synth
from hsgc.errors import ParameterError
from hsgc.synth import SynthSpec

from conftest import SYNTH_CUBE, SYNTH_TRUTH


def test_zero_noise_is_exact_signature():
    spec = SynthSpec(width=20, height=12, bands=8, classes=3, region_seeds=6, noise_sigma=0.0, rng_seed=4)
    cube, truth = synth.generate(spec)
    sig = synth.class_signatures(spec)
    np.testing.assert_array_equal(cube.data, sig[truth.labels - 1].astype(np.float32))


def test_same_seed_same_output():
    spec = SynthSpec(width=16, height=16, bands=5, rng_seed=99)
    a, ta = synth.generate(spec)
    b, tb = synth.generate(spec)
    np.testing.assert_array_equal(a.data, b.data)
    np.testing.assert_array_equal(ta.labels, tb.labels)
    c, _ = synth.generate(SynthSpec(width=16, height=16, bands=5, rng_seed=100))
    assert not np.array_equal(a.data, c.data)


def test_two_by_one_grid():
    for seed in range(10):
        _, truth = synth.generate(SynthSpec(width=2, height=1, bands=3, classes=2, region_seeds=2,
                                            noise_sigma=0.0, rng_seed=seed))
        assert sorted(truth.labels.ravel().tolist()) == [1, 2]


@pytest.mark.parametrize("kwargs", [
    {"classes": 1},
    {"classes": 5, "region_seeds": 4},
    {"width": 2, "height": 2, "region_seeds": 5},
    {"noise_sigma": -0.1},
    {"bands": 0},
])
def test_spec_errors(kwargs):
    with pytest.raises(ParameterError):
        SynthSpec(**kwargs)


def test_unreachable_separation_fails():
    with pytest.raises(ParameterError, match="signatures"):
        synth.generate(SynthSpec(width=8, height=8, bands=4, classes=3, region_seeds=3, separation=10.0))


@pytest.mark.parametrize("seed", range(8))
def test_all_classes_present_and_separated(seed):
    spec = SynthSpec(width=24, height=20, bands=10, classes=5, region_seeds=9, rng_seed=seed)
    _, truth = synth.generate(spec)
    assert set(np.unique(truth.labels).tolist()) == {1, 2, 3, 4, 5}
    sig = synth.class_signatures(spec)
    assert sig.min() == 0.0 and sig.max() == 1.0
    d = np.sqrt(((sig[:, None] - sig[None]) ** 2).sum(-1))
    assert d[np.triu_indices(5, 1)].min() >= spec.min_separation


def test_voronoi_ties_go_to_lower_site():
    sites = np.array([[0.0, 0.0], [2.0, 0.0]])
    assert synth.voronoi_labels(3, 1, sites).tolist() == [[0, 0, 1]]


def test_committed_fixture_matches_default_generator():
    cube, truth = synth.generate(SynthSpec())
    np.testing.assert_array_equal(hsi_io.read_cube(SYNTH_CUBE).data, cube.data)
    np.testing.assert_array_equal(hsi_io.read_label_map(SYNTH_TRUTH).labels, truth.labels)


def test_noise_level(rng):
    spec = SynthSpec(width=64, height=64, bands=16, noise_sigma=0.05)
    cube, truth = synth.generate(spec)
    resid = cube.data - synth.class_signatures(spec)[truth.labels - 1]
    assert abs(resid.std() - 0.05) < 0.002
    assert abs(resid.mean()) < 0.002
