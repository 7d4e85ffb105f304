import os
import textwrap

import numpy as np
import pytest

from spheremimo.channel import JointAngularProfile, SphereQuadrature
from spheremimo.modes import truncate

# Make tests more predictable and avoid picking up real scenario files.
os.environ.pop("SPHEREMIMO_SCENARIO", None)

# Radius of the sphere enclosing a λ/2 square plate (λ = 1).
R0 = np.sqrt(2) / 4
K = 2 * np.pi

DEFAULT_MEAN_DEG = [90, 0, 90, 0]
DEFAULT_SPREADS_DEG = [15, 30, 15, 30]


@pytest.fixture(scope="session")
def quad():
    return SphereQuadrature(32, 64)


@pytest.fixture(scope="session")
def fine_quad():
    return SphereQuadrature(64, 128)


@pytest.fixture(scope="session")
def trunc():
    return truncate(K, R0)


def default_profile(rho: float = 0.2, polarization: str = "theta") -> JointAngularProfile:
    return JointAngularProfile.from_degrees(DEFAULT_MEAN_DEG, DEFAULT_SPREADS_DEG, rho=rho, polarization=polarization)


@pytest.fixture
def profile():
    return default_profile()


@pytest.fixture
def small_scenario(tmp_path):
    """Reduced scenario file: coarse grid, few realizations."""
    path = tmp_path / "small.ini"
    path.write_text(textwrap.dedent("""
        [scenario]
        seed = 7
        output_dir = {out}

        [currents]
        cells = 100

        [optimizer]
        trace_rhos = 0.0, 0.2

        [quadrature]
        n_theta = 24
        n_phi = 48

        [capacity]
        snr_db = 0, 15
        n_realizations = 40
        n_rays = 50
    """.format(out=(tmp_path / "out").as_posix())))
    return path
