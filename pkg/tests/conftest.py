import numpy as np
import pytest

from pzsrc import synth
from pzsrc.moments import build_basis, build_disk_geometry

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def basis32():
    return build_basis(6, build_disk_geometry(32))


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """Three classes, 24 train / 12 test angles, side 48: quick end-to-end runs."""
    out = tmp_path_factory.mktemp("small")
    targets = synth.default_targets(aspect_irregularity=0.1, clutter_sigma=0.05, seed=3)
    manifest = synth.make_manifest(targets, side=48, n_train=24, n_test=12)
    return synth.generate_dataset(manifest, out)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
