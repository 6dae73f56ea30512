import numpy as np
import pytest


@pytest.fixture(autouse=True)
def frozen_clock(mocker):
    """Trial wall times are recorded with perf_counter; pin it so runs compare."""
    return mocker.patch("sparsetest.harness.time.perf_counter", return_value=100.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20211231)
