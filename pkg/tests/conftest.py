import pytest

from coexqkd.config import load_config


@pytest.fixture(scope="session")
def cfg95():
    return load_config("bundled:link_95p5km.cfg")


@pytest.fixture(scope="session")
def cfg51():
    return load_config("bundled:link_51p5km.cfg")


@pytest.fixture(scope="session")
def sc95(cfg95):
    return cfg95.scenario


@pytest.fixture(scope="session")
def sc51(cfg51):
    return cfg51.scenario
