import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cavityorder.params import SystemParams

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

REFERENCE = dict(g=1.0, kappa=10.0, omega_pump=5.0, delta_a=-20.0, delta_c=-10.0,
            waist=1000.0, omega_r=1.0)


def make_params(n_atoms=2, **kw):
    values = dict(REFERENCE)
    values.update(kw)
    return SystemParams(n_atoms=n_atoms, **values)


@pytest.fixture
def reference():
    return make_params(100)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
