import numpy as np
import pytest

from qforge.qcore import DensityMatrix


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def bell() -> DensityMatrix:
    m = np.zeros((4, 4), dtype=complex)
    m[0, 0] = m[0, 3] = m[3, 0] = m[3, 3] = 0.5
    return DensityMatrix(m)


@pytest.fixture
def mixed4() -> DensityMatrix:
    return DensityMatrix(np.eye(4, dtype=complex) / 4)


def werner(p: float) -> DensityMatrix:
    m = np.zeros((4, 4), dtype=complex)
    m[0, 0] = m[0, 3] = m[3, 0] = m[3, 3] = 0.5
    return DensityMatrix(p * m + (1 - p) * np.eye(4) / 4)
