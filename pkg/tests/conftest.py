import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from qdip import DipoleMatrix, SystemSpec, build_control_set

settings.register_profile(
    "package", deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large])
settings.load_profile("package")


@pytest.fixture(scope="session")
def twolevel():
    spec = SystemSpec.from_energies([0.0, 1.0], initial=1, measured=2)
    dipole = DipoleMatrix.from_physical([[0.0, 1.0], [1.0, 0.0]])
    return spec, dipole


@pytest.fixture(scope="session")
def ladder3():
    spec = SystemSpec.from_energies([0.0, 1.0, 2.5], initial=1, measured=3)
    dipole = DipoleMatrix.from_physical(
        [[0.0, 1.0, 0.0], [1.0, 0.0, 0.8], [0.0, 0.8, 0.0]])
    return spec, dipole


@pytest.fixture(scope="session")
def full3():
    spec = SystemSpec.from_energies([0.0, 1.0, 2.5], initial=1, measured=3)
    dipole = DipoleMatrix.from_physical(
        [[0.0, 1.0, 0.5], [1.0, 0.0, 0.8], [0.5, 0.8, 0.0]])
    return spec, dipole


# The synthesized control sets are shared across the identification tests
# and several acceptance tests; synthesis is deterministic, so building
# them once per session changes nothing but the wall time.

@pytest.fixture(scope="session")
def ladder_sets(ladder3):
    spec, dipole = ladder3
    return {xi: build_control_set(spec, dipole, xi)
            for xi in (0.04, 0.02, 0.01)}


@pytest.fixture(scope="session")
def full3_set(full3):
    spec, dipole = full3
    return build_control_set(spec, dipole, 0.02)


def random_dipole(rng: np.random.Generator, dim: int) -> DipoleMatrix:
    """Random fully coupled normalized dipole for property tests."""
    upper = rng.uniform(0.3, 1.0, (dim, dim)) * rng.choice([-1.0, 1.0],
                                                           (dim, dim))
    matrix = np.triu(upper, 1)
    return DipoleMatrix.from_physical(matrix + matrix.T)


def random_spec(rng: np.random.Generator, dim: int) -> SystemSpec:
    """Random spec with well-separated, non-degenerate transitions."""
    while True:
        energies = np.sort(rng.uniform(-1.0, 1.0, dim))
        gaps = np.abs(energies[:, None] - energies[None, :])[
            np.triu_indices(dim, 1)]
        pairwise = np.abs(gaps[:, None] - gaps[None, :])[
            np.triu_indices(len(gaps), 1)]
        if gaps.min() > 0.05 and (pairwise.min() > 0.05 if len(gaps) > 1
                                  else True):
            return SystemSpec.from_energies(
                energies, initial=1, measured=dim)
