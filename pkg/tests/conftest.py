import pytest

from pacconv.core import TrialRunner
from pacconv.linalg import RngStream


@pytest.fixture
def rng():
    return RngStream(20240607)


@pytest.fixture
def runner():
    return TrialRunner(workers=1)
