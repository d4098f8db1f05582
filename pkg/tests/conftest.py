import sys
from pathlib import Path

import hypothesis
import numpy as np
import pytest

# Flat layout: packages live at the repository root
ROOT = Path(__file__).resolve().parent.parent
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from lab.generators import CircleManifoldConfig, SwissRollConfig, gen_circle_manifold, gen_swiss_roll  # noqa: E402
from processing.bandwidth import McmcConfig  # noqa: E402
from processing.dataset import Dataset  # noqa: E402

np.seterr(all="warn")

hypothesis.settings.register_profile("fast", max_examples=25, deadline=None)
hypothesis.settings.register_profile("thorough", max_examples=200, deadline=None)
hypothesis.settings.load_profile("fast")


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow simulation checks")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def small_dataset():
    rng = np.random.default_rng(7)
    X = rng.uniform(-1.0, 1.0, size=(12, 3))
    y = np.sin(X[:, 0]) + 0.05 * rng.standard_normal(12)
    return Dataset(X, y)


@pytest.fixture
def swiss_small():
    return gen_swiss_roll(SwissRollConfig(n=60, ambient_dim=10, seed=3))


@pytest.fixture
def circle_small():
    return gen_circle_manifold(CircleManifoldConfig(n=36, ambient_dim=8, seed=5))


@pytest.fixture
def quick_mcmc():
    return McmcConfig(n_iter=120, burn_in=60, seed=11)
