import numpy as np
import pytest

from poissonpert import RngStream


@pytest.fixture
def rng():
    """Base stream for a test; child streams keep draws independent."""
    return RngStream(20240811)


def z_score(estimate, target, stderr):
    if stderr == 0.0:
        return 0.0 if estimate == target else np.inf
    return abs(estimate - target) / stderr
