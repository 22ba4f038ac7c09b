import json

import pytest

from spiketest.spectral_measure import BulkSpec, DiscreteMeasure


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run Monte Carlo acceptance tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def unit_bulk():
    return BulkSpec(DiscreteMeasure.point_mass(1.0))


@pytest.fixture
def flat_bulk_2():
    return BulkSpec(DiscreteMeasure.point_mass(2.0))


@pytest.fixture
def write_json(tmp_path):
    def _write(name, payload):
        path = tmp_path / name
        path.write_text(json.dumps(payload))
        return str(path)
    return _write
