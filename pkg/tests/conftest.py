import pytest
from hypothesis import HealthCheck, settings

from sddlab import Grid1D, IncidenceFn, ModelParams, find_equilibria

settings.register_profile(
    "ci",
    max_examples=25,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")


@pytest.fixture(scope="session")
def ref_params():
    """Reference parameter set used throughout (interior equilibrium exists)."""
    return ModelParams(lam=10.0, d=0.1, delta=0.5, burst_n=10.0, c=5.0, omega=0.0, h_max=1.0)


@pytest.fixture(scope="session")
def saturated():
    return IncidenceFn("saturated", k=0.1, k2=0.1)


@pytest.fixture(scope="session")
def bilinear():
    return IncidenceFn("bilinear", k=0.1)


@pytest.fixture(scope="session")
def sat_equilibrium(ref_params, saturated):
    eqs = find_equilibria(ref_params, saturated)
    assert len(eqs) == 2
    return eqs[1]


@pytest.fixture(scope="session")
def small_grid():
    return Grid1D(0.0, 1.0, 5)
