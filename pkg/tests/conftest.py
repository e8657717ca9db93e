import numpy as np
import pytest

from lightcone.geometry import SpacetimePoint
from lightcone.operators import ModelConfig
from lightcone.quadrature import Deterministic, MonteCarlo, QuadSpec
from lightcone.weights import GaussPoly


@pytest.fixture
def gauss1():
    return GaussPoly(1.0)


@pytest.fixture
def massless_cfg(gauss1):
    return ModelConfig(1.0, 0.0, 0.0, gauss1, QuadSpec(MonteCarlo(4096, 2), seed=11))


@pytest.fixture
def massive_cfg(gauss1):
    return ModelConfig(1.0, 1.0, 0.5, gauss1, QuadSpec(MonteCarlo(4096, 2), seed=11))


@pytest.fixture
def det_cfg(gauss1):
    return ModelConfig(1.0, 0.0, 0.0, gauss1, QuadSpec(Deterministic(8), seed=11))


def random_pairs(n, horizon=1.5, radius=1.0, seed=0):
    gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    out = []
    for _ in range(n):
        t1, t2 = gen.random(2) * horizon
        p = tuple(radius * (2.0 * gen.random(3) - 1.0))
        q = tuple(radius * (2.0 * gen.random(3) - 1.0))
        out.append((SpacetimePoint(t1, p), SpacetimePoint(t2, q)))
    return out
