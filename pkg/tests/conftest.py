import pytest

from rsu_cloud_crm.delay import QueueParams, build_lut, delay_table
from rsu_cloud_crm.scenario import DemandMatrix, default_scenario_path, load_scenario

TRIANGLE = "tests/scenarios/triangle.json"
RING5 = "tests/scenarios/ring5.json"


def demand(values, service="s0", interval=1):
    """DemandMatrix of `values` units per node for a single service."""
    return DemandMatrix(
        interval=interval,
        units={(node, service): count for node, count in values.items()},
    )


@pytest.fixture
def triangle():
    return load_scenario(TRIANGLE)


@pytest.fixture
def ring5():
    return load_scenario(RING5)


@pytest.fixture
def default_scenario():
    return load_scenario(default_scenario_path())


@pytest.fixture
def triangle_luts(triangle):
    return delay_table(triangle)


@pytest.fixture
def lut_100_1():
    """100 Mbps edge, 1 Mbps buckets, 800 byte packets, 10 us processing."""
    params = QueueParams(processing_delay=10e-6, packet_size=6400, ca=1, cs=1)
    return build_lut(100, 1, params)
