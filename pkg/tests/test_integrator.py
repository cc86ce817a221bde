import numpy as np
import pytest

from cavityorder.cumulants import SecondOrderModel
from cavityorder.integrator import (
    IntegrationError,
    IntegratorSettings,
    StepSizeUnderflow,
    integrate,
    sample_grid,
)
from cavityorder.geometry import K

from conftest import make_params

TIGHT = IntegratorSettings(rel_tol=1e-10, abs_tol=1e-12)


def test_empty_cavity_field_decay():
    p = make_params(1, g=0.0, omega_pump=0.0, init_pos_halfwidth=0.0, init_mom_halfwidth=0.0)
    m = SecondOrderModel(p, frozen_motion=True)
    y0 = m.initial_vector()
    m.layout.set(y0, "a_mean", 1.0 + 0.0j)
    m.layout.set(y0, "n_phot", 1.0)
    tr = integrate(m.rhs, y0, 1.0, TIGHT)
    s = m.state_from_vector(tr.final_state)
    expected = np.exp((1j * p.delta_c - p.kappa / 2) * 1.0)
    assert abs(s.a_mean - expected) < 1e-6
    assert s.n_phot == pytest.approx(np.exp(-p.kappa), abs=1e-6)


def test_excited_atom_population_decay():
    p = make_params(1, g=0.0, omega_pump=0.0)
    m = SecondOrderModel(p, frozen_motion=True)
    y0 = m.initial_vector()
    m.layout.set(y0, "pop", np.array([1.0]))
    tr = integrate(m.rhs, y0, 1.0, TIGHT)
    assert m.populations(tr.final_state)[0] == pytest.approx(np.exp(-1.0), abs=1e-6)


def test_free_flight():
    p = make_params(3, g=0.0, omega_pump=0.0, seed=5)
    m = SecondOrderModel(p)
    y0 = m.initial_vector()
    tr = integrate(m.rhs, y0, 4.0, TIGHT)
    x0, px0 = m.layout.get(y0, "x"), m.layout.get(y0, "px")
    x1 = m.layout.get(tr.final_state, "x")
    assert np.allclose(x1, x0 + 2 * p.omega_r * px0 * 4.0 / K, atol=1e-9)
    assert np.array_equal(m.layout.get(tr.final_state, "px"), px0)


def test_samples_on_uniform_grid_and_dense_output_accuracy():
    s = IntegratorSettings(rel_tol=1e-9, abs_tol=1e-12, max_step=0.7, sample_dt=0.05)
    tr = integrate(lambda t, y: np.array([y[1], -y[0]]), [1.0, 0.0], 3.0, s)
    assert np.allclose(tr.times, np.arange(61) * 0.05)
    assert np.allclose(tr.samples[:, 0], np.cos(tr.times), atol=1e-7)
    assert tr.final_time == 3.0
    assert np.array_equal(tr.samples[-1], tr.final_state)


def test_sample_grid_endpoints():
    g = sample_grid(0.0, 1.0, 0.3)
    assert g[0] == 0.0 and g[-1] <= 1.0 + 1e-12
    assert np.allclose(np.diff(g), 0.3)


def test_samples_never_extrapolate_past_accepted_steps():
    calls = []

    def rhs(t, y):
        calls.append(t)
        return -y

    tr = integrate(rhs, [1.0], 2.0, IntegratorSettings(sample_dt=0.5, max_step=2.0))
    assert max(calls) <= 2.0 + 1e-12
    assert tr.times[-1] <= tr.final_time


def test_error_decreases_with_tolerance():
    errs = []
    for rtol in (1e-4, 1e-6, 1e-8):
        tr = integrate(lambda t, y: -2.0 * y, [1.0], 3.0,
                       IntegratorSettings(rel_tol=rtol, abs_tol=rtol * 1e-2))
        errs.append(abs(tr.final_state[0] - np.exp(-6.0)))
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-9


def test_bitwise_determinism():
    p = make_params(4, seed=12)
    m = SecondOrderModel(p)
    a = integrate(m.rhs, m.initial_vector(), 3.0)
    b = integrate(m.rhs, m.initial_vector(), 3.0)
    assert np.array_equal(a.samples, b.samples)
    assert a.stats == b.stats


def test_blow_up_raises_underflow_with_state():
    with pytest.raises(StepSizeUnderflow) as info:
        integrate(lambda t, y: y**2, [1.0], 2.0)
    err = info.value
    assert isinstance(err, IntegrationError)
    assert err.t == pytest.approx(1.0, abs=1e-3)  # blow-up time of y = 1/(1-t)
    assert np.all(np.isfinite(err.y))


def test_max_steps_raises():
    with pytest.raises(IntegrationError):
        integrate(lambda t, y: -y, [1.0], 100.0,
                  IntegratorSettings(max_step=0.01, max_steps=10))


def test_check_callback_records_violation_and_aborts():
    tr = integrate(lambda t, y: -y, [1.0], 1.0, IntegratorSettings(sample_dt=0.25),
                   check=lambda y: 1e-8 if y[0] < 0.5 else 0.0)
    assert tr.violations[0] == 0.0 and tr.violations[-1] == 1e-8
    assert list(tr.flagged) == [False, False, False, tr.violations[3] > 0, True]

    class Boom(RuntimeError):
        pass

    def check(y):
        if y[0] < 0.5:
            raise Boom("stop")
        return 0.0

    with pytest.raises(Boom) as info:
        integrate(lambda t, y: -y, [1.0], 1.0, check=check)
    assert info.value.t < np.log(2) + 1e-9
    assert info.value.y[0] >= 0.5


@pytest.mark.parametrize("kw", [
    {"rel_tol": 0.0}, {"abs_tol": -1.0}, {"max_step": float("nan")}, {"sample_dt": 1e-12},
    {"sample_dt": float("inf")},
])
def test_settings_validation(kw):
    with pytest.raises(ValueError):
        IntegratorSettings(**kw)


def test_input_validation():
    with pytest.raises(ValueError):
        integrate(lambda t, y: y, [[1.0]], 1.0)
    with pytest.raises(ValueError):
        integrate(lambda t, y: y, [np.nan], 1.0)
    with pytest.raises(ValueError):
        integrate(lambda t, y: y, [1.0], 0.0)
