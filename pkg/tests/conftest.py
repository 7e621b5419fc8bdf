import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from rampctl.iter_hybrid import build_iter_hybrid_env, default_sim_config
from rampctl.plasma import InitialProfiles, SimConfig

settings.register_profile(
    "rampctl",
    deadline=None,
    max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("rampctl")

# filled by tests/test_acceptance.py, printed at the end of the session
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def quiet_sim(base: SimConfig | None = None, **changes) -> SimConfig:
    """No sources, no sinks and closed boundaries: energy and particles are conserved."""
    base = base or default_sim_config()
    return base.replace(
        edge_bc="zero_flux",
        ohmic_multiplier=0.0,
        radiation_multiplier=0.0,
        tau_density_s=math.inf,
        **changes,
    )


def energy_oracle(state, sim):
    """(3/2)(n_e T_e + n_i T_i) integrated over the piecewise-constant cells, MJ.

    Built from the torus geometry directly, not from the grid's cached volumes.
    """
    g = sim.grid
    edges = np.linspace(0.0, 1.0, g.n_cells + 1)
    shell = 2 * math.pi * g.major_radius_m * math.pi * g.minor_radius_m**2 * np.diff(edges**2)
    z, zeff = sim.impurity_charge, sim.z_eff
    n_i = state.n_e * (z - zeff) / (z - 1)
    dens = 1.5 * (state.n_e * state.T_e + n_i * state.T_i) * 1e19 * 1.602176634e-16 / 1e6
    return float(np.sum(dens * shell))


def short_env(horizon: int = 12, **overrides):
    """Default scenario cut to a few steps, for fast unit tests."""
    return build_iter_hybrid_env(horizon_steps=horizon, **overrides)


@pytest.fixture
def sim():
    return default_sim_config()


@pytest.fixture
def profiles(sim):
    return InitialProfiles.parabolic(sim.grid, T_core=5.0, n_core=6.0, n_edge=2.0, i_p=3.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
