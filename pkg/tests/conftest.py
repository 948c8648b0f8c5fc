import numpy as np
import pytest

from anisoq import construction
from anisoq.energy import PsiConfig

EPS_GRID = (0.02, 0.05, 0.1, 0.15, 0.2)


@pytest.fixture(scope="session")
def bundle01():
    return construction.build(0.1)


@pytest.fixture(scope="session")
def cfg01():
    return PsiConfig.for_eps(0.1)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)
