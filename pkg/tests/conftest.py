import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hgpw.geometry import CrossSection, build_mesh, region_masks
from hgpw.modesolver import select_hybrid, solve_modes

settings.register_profile("repo", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture(scope="session")
def device_200():
    """Default-mesh solve of the 200 nm gap device: (mesh, modes, hybrid)."""
    mesh = build_mesh(CrossSection(gap=200.0), "default", 785.0)
    modes = solve_modes(mesh, 785.0, count=4)
    return mesh, modes, select_hybrid(modes, region_masks(mesh))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
