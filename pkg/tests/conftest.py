import math

import numpy as np
import pytest

from tbemon.aggregate import build_stationary
from tbemon.distributions import MobeParams


def ks_bound(n):
    """One-sample KS critical value at the 1% level."""
    return 1.63 / math.sqrt(n)


def ks_bound2(n, m):
    """Two-sample KS critical value at the 1% level."""
    return 1.63 * math.sqrt((n + m) / (n * m))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(scope="session")
def small_artifact():
    """Small MOBE (0.2, 0.2) artifact shared by the fast tests."""
    return build_stationary(MobeParams(0.2, 0.2), m=20_000, pool_size=1000,
                            burn_in=10_000, spacing=50, seed=7)
