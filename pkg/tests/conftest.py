import numpy as np
import pytest

from semikl.core import SimParams


@pytest.fixture
def p1(scope="session"):
    return SimParams(d=1, grid_points=256, box_length=20.0, hbar=0.1)


@pytest.fixture
def p3(scope="session"):
    return SimParams(d=3, grid_points=32, box_length=16.0, hbar=0.1)


def rel_err(value, reference):
    ref = np.abs(reference)
    if ref == 0:
        return np.abs(value)
    return np.abs(value - reference) / ref
