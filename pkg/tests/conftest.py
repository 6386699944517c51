import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from helpers import default_params, make_grid  # noqa: E402


@pytest.fixture
def params():
    return default_params()


@pytest.fixture
def grid2d():
    return make_grid(d=2, n=17)


@pytest.fixture
def rng():
    import numpy as np

    return np.random.default_rng(20240817)
