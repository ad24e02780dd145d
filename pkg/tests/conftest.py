import numpy as np
import pytest

from airfl.channel import AntennaLayout, build_los_channel, draw_links
from airfl.ota import OtaConfig

ACCEPTANCE_LINES = []


def los_instance(seed, users=5, antennas=3, wavelength=1.0):
    rng = np.random.default_rng(seed)
    links = draw_links(users, rng)
    return build_los_channel(AntennaLayout.default(antennas, wavelength), links, wavelength)


@pytest.fixture
def ota():
    return OtaConfig()


@pytest.fixture
def noiseless():
    return OtaConfig(noise_power=0.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
