import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from util import tiny_nets  # noqa: E402


@pytest.fixture(scope="session")
def nets():
    """Small gradient-field nets shared across structural tests."""
    return tiny_nets(seed=0, epochs=2, n=200)


@pytest.fixture(scope="session")
def spread2():
    from iatt.engine import ScenarioSpec

    return ScenarioSpec(kind="spread", n_per_side=2, horizon=50)


@pytest.fixture(scope="session")
def spread3():
    from iatt.engine import ScenarioSpec

    return ScenarioSpec(kind="spread", n_per_side=3, horizon=50)
