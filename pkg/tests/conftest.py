import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from src.utils import make_rng  # noqa: E402

# seuil des tests statistiques : un faux rejet pour mille exécutions
ALPHA = 0.001


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="exécute aussi les tests statistiques longs")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="test long : utiliser --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return make_rng(20240101)
