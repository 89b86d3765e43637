import numpy as np
import pytest

from pollenqpi.field import GridSpec
from pollenqpi.holosim import PollenPhantom, Profile, ReferenceWave, SensorModel, simulate_phantom


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def grid512():
    return GridSpec(512, 512)


@pytest.fixture(scope="session")
def hemisphere512(grid512):
    """Default noiseless hemisphere: (hologram, truth, object field, phantom)."""
    ph = PollenPhantom(Profile.HEMISPHERE)
    holo, truth, obj = simulate_phantom(ph, grid512, ReferenceWave(), SensorModel())
    return holo, truth, obj, ph


@pytest.fixture(scope="session")
def step_edge512(grid512):
    """Plateau with a hard edge (rim_softness 0), noiseless."""
    ph = PollenPhantom(Profile.PLATEAU, peak_phase=3.9, rim_softness=0.0)
    holo, truth, obj = simulate_phantom(ph, grid512, ReferenceWave(), SensorModel())
    return holo, truth, obj, ph


def complex_normal(rng, shape):
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
