import numpy as np
import pytest
import torch

from hdrvgan.dataio import ingest
from hdrvgan.synthetic import write_synthetic_dataset


@pytest.fixture(autouse=True)
def _seed_everything():
    torch.manual_seed(0)
    np.random.seed(0)


@pytest.fixture(scope="session")
def scene_tree(tmp_path_factory):
    """Four 64x64 synthetic scenes of 6 frames each."""
    root = tmp_path_factory.mktemp("scenes")
    return write_synthetic_dataset(root, n_scenes=4, n_frames=6, height=64, width=64, seed=11)


@pytest.fixture(scope="session")
def manifest(scene_tree):
    return ingest(scene_tree, test_count=1, seed=0)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
