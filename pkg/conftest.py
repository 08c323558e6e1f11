"""Shared pytest fixtures and the ``slow`` marker."""

import pytest

from quadplan.config import RunConfig
from quadplan.services.quad_model import hover_state


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="run full-grid mission solves")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-grid mission solve, needs --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def run_config():
    return RunConfig()


@pytest.fixture
def quad(run_config):
    return run_config.vehicle


@pytest.fixture
def vehicle(run_config):
    return run_config.vehicle_config()


@pytest.fixture
def limits(vehicle):
    return vehicle.limits


@pytest.fixture
def hover(quad):
    return hover_state(quad)


@pytest.fixture
def mission(run_config):
    return run_config.mission_spec()


@pytest.fixture
def table2_wind(run_config):
    return run_config.wind.model()
