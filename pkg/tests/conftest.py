import numpy as np
import pytest

from ergoarm import GridDomain, ScalarField
from ergoarm.chain import parse_chain

PLANAR_3LINK = """
dims 2
joint
  origin 0 0
  limits -6.28 6.28
  segment 0 0  1 0
  volume 0.1
joint
  origin 1 0
  limits -6.28 6.28
  segment 0 0  1 0
  volume 0.1
joint
  origin 1 0
  limits -6.28 6.28
  segment 0 0  1 0
  volume 0.1
"""

PLANAR_2LINK = """
dims 2
joint
  origin 0 0
  limits -6.28 6.28
  segment 0 0  1 0
  volume 0.1
joint
  origin 1 0
  limits -6.28 6.28
  segment 0 0  1 0
  volume 0.1
"""


@pytest.fixture
def domain_2d():
    return GridDomain((16, 16), (1.0, 1.0), (0.0, 0.0))


@pytest.fixture
def domain_3d():
    return GridDomain((8, 8, 8), (1.0, 1.0, 1.0), (0.0, 0.0, 0.0))


@pytest.fixture
def chain3():
    return parse_chain(PLANAR_3LINK)


@pytest.fixture
def chain2():
    return parse_chain(PLANAR_2LINK)


def random_field(domain, seed=0, lo=0.0, hi=1.0):
    rng = np.random.default_rng(seed)
    return ScalarField(domain, rng.uniform(lo, hi, domain.shape))
