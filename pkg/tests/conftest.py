import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from igdiv import manifold as mf  # noqa: E402


@pytest.fixture(scope="session")
def flat():
    return mf.euclidean(2)


@pytest.fixture(scope="session")
def sphere():
    return mf.sphere2()


@pytest.fixture(scope="session")
def bernoulli():
    return mf.hessian("bernoulli")


@pytest.fixture(scope="session")
def gauss_nat():
    return mf.hessian("gaussian_natural")


@pytest.fixture(scope="session")
def agauss():
    return mf.alpha_gaussian(0.5)
