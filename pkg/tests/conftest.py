from pathlib import Path

import numpy as np
import pytest

from hsgc import covfield, dimred, hsi_io

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"
SYNTH_CUBE = FIXTURES / "synth_64x64x16.hsc"
SYNTH_TRUTH = FIXTURES / "synth_64x64x16_truth.csv"


@pytest.fixture(scope="session")
def synth_cube():
    return hsi_io.read_cube(SYNTH_CUBE)


@pytest.fixture(scope="session")
def synth_truth():
    return hsi_io.read_label_map(SYNTH_TRUTH, 64, 64)


@pytest.fixture(scope="session")
def synth_reduced(synth_cube):
    return dimred.project(synth_cube, dimred.fit_pca(synth_cube, 0.98))


@pytest.fixture(scope="session")
def synth_field(synth_reduced):
    return covfield.build_log_cov_field(synth_reduced, 5)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def two_region_cube(width=32, height=32, bands=3, noise=0.02, seed=3):
    """Left half one spectrum, right half another, plus Gaussian noise."""
    r = np.random.default_rng(seed)
    data = np.zeros((height, width, bands))
    data[:, : width // 2] = np.linspace(0.2, 0.8, bands)
    data[:, width // 2:] = np.linspace(0.9, 0.1, bands)
    data += r.normal(0, noise, data.shape)
    truth = np.ones((height, width), dtype=np.int64)
    truth[:, width // 2:] = 2
    return hsi_io.HsiCube(data), hsi_io.LabelMap(truth)


_CRITERIA: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    """Record one acceptance line: ``criterion(number, passed, detail)``."""
    def record(number: int, passed: bool, detail: str) -> bool:
        _CRITERIA[number] = (bool(passed), detail)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(_CRITERIA):
        passed, detail = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
