"""Shared fixtures: canonical parameter sets and seeded generators."""

import numpy as np
import pytest

from aerialfl import NetworkParams, QuadratureSpec


@pytest.fixture(scope="session")
def table_params() -> NetworkParams:
    """Full-scale baseline parameters (urban channel, 100-device clusters)."""
    return NetworkParams()


@pytest.fixture(scope="session")
def desk_params() -> NetworkParams:
    """Desk-scale cluster that keeps the scheduling probability at 0.9."""
    return NetworkParams(n_devices=20, n_resource_blocks=18)


@pytest.fixture(scope="session")
def fast_quad() -> QuadratureSpec:
    """Looser tolerances for tests that only need qualitative behaviour."""
    return QuadratureSpec(rel_tol=1e-6, abs_tol=1e-10)


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(0xA11CE)
