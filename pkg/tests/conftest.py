import numpy as np
import pytest

from ionrewire import PhysicalConstants, TrapConfig


@pytest.fixture(scope="session")
def constants():
    return PhysicalConstants()


@pytest.fixture(scope="session")
def trap():
    """Measured secular frequencies used throughout the bundled scenarios."""
    return TrapConfig.from_hz(0.978e6, 1.748e6, 1.798e6)


@pytest.fixture(scope="session")
def soft_y_trap():
    """Anisotropy below the three-ion zigzag threshold: yields a 2D crystal."""
    return TrapConfig.from_hz(0.978e6, 1.3e6, 1.798e6)


@pytest.fixture(scope="session")
def x_direction():
    return np.array([1.0, 0.0, 0.0])
