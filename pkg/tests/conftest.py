import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

import macad_logging  # noqa: E402
from macad_world import load_map  # noqa: E402


@pytest.fixture(autouse=True)
def _detach_logs():
    yield
    macad_logging.close()


@pytest.fixture(scope="session")
def town_map():
    return load_map("town3_like_3way")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
