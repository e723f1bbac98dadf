import numpy as np
import pytest

from ndf.ensemble import (
    EnsembleField,
    GridDomain,
    SquaredExponentialKernel,
    WhiteNoiseKernel,
    generate_synthetic,
)


@pytest.fixture(scope="session")
def small_domain():
    return GridDomain(6, 5, 4)


@pytest.fixture(scope="session")
def random_field(small_domain):
    """Unstructured random ensemble for interpolation and estimator tests."""
    rng = np.random.default_rng(7)
    values = rng.standard_normal((2, 9, small_domain.nz, small_domain.ny,
                                  small_domain.nx)).astype(np.float32)
    return EnsembleField(small_domain, ("a", "b"), values)


@pytest.fixture(scope="session")
def smooth_field():
    """Squared-exponential ensemble: the training workhorse."""
    return generate_synthetic(GridDomain(12, 12, 6), 64, ("v",),
                              SquaredExponentialKernel(0.5), seed=11)


@pytest.fixture(scope="session")
def white_field():
    return generate_synthetic(GridDomain(5, 5, 4), 200, ("w",),
                              WhiteNoiseKernel(), seed=3)
