import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from cavityorder.integrator import Trajectory
from cavityorder.observables import (
    capped_energy,
    inversion,
    kinetic_energy,
    order_parameter,
    time_average,
)

from conftest import make_params

coords = arrays(np.float64, st.integers(1, 50), elements=st.floats(-50, 50))


def test_order_parameter_examples():
    assert order_parameter([0.0, 0.5], [0.0, 0.5]) == pytest.approx(1.0)
    assert order_parameter([0.5, 0.0], [0.0, 0.5]) == pytest.approx(-1.0)
    assert order_parameter([0.25], [0.0]) == pytest.approx(0.0, abs=1e-15)
    assert order_parameter([0.0, 0.5], [0.0, 0.0]) == pytest.approx(0.0, abs=1e-15)


@given(coords, st.data())
def test_order_parameter_bounds_and_parity(x, data):
    y = data.draw(arrays(np.float64, x.shape, elements=st.floats(-50, 50)))
    th = order_parameter(x, y)
    assert -1.0 - 1e-12 <= th <= 1.0 + 1e-12
    assert order_parameter(x + 0.5, y) == pytest.approx(-th, abs=1e-9)
    assert order_parameter(x + 1.0, y + 1.0) == pytest.approx(th, abs=1e-9)
    assert order_parameter(-x, -y) == pytest.approx(th, abs=1e-12)


def test_kinetic_energy_units():
    assert kinetic_energy([1.0, 0.0], [0.0, 2.0]) == pytest.approx(2.5)
    p = make_params(1, omega_r=0.1)
    assert kinetic_energy([1.0, 0.0], [0.0, 2.0], p, units="rate") == pytest.approx(0.25)
    with pytest.raises(ValueError):
        kinetic_energy([1.0], [1.0], units="joule")
    with pytest.raises(ValueError):
        kinetic_energy([], [])


@given(arrays(np.float64, st.integers(1, 20), elements=st.floats(-10, 10)), st.floats(0.1, 5))
def test_kinetic_energy_scales_quadratically(px, c):
    assert kinetic_energy(c * px, c * px) == pytest.approx(c * c * kinetic_energy(px, px), rel=1e-9, abs=1e-12)


def test_inversion():
    assert inversion([0.0, 0.0]) == -1.0
    assert inversion([1.0, 0.5]) == pytest.approx(0.5)


def test_capped_energy_does_not_modify_input():
    e = np.array([1.0, 12.0, 9.9])
    out = capped_energy(e)
    assert np.array_equal(out, [1.0, 10.0, 9.9])
    assert e[1] == 12.0


def _traj(times, **series):
    times = np.asarray(times, dtype=float)
    obs = {"theta": np.zeros_like(times), "abs_theta": np.zeros_like(times),
           "e_kin": np.zeros_like(times), "n_phot": np.zeros_like(times),
           "inversion": -np.ones_like(times)}
    obs.update({k: np.asarray(v, dtype=float) for k, v in series.items()})
    return Trajectory(times, np.zeros((len(times), 1)), times[-1], np.zeros(1),
                      np.zeros(len(times)), observables=obs)


def test_time_average_of_sine_over_full_periods():
    t = np.arange(0, 40.0 + 1e-9, 0.01)
    theta = np.sin(2 * np.pi * t / 10)
    rec = time_average(_traj(t, theta=theta, abs_theta=np.abs(theta)), window=30.0)
    assert rec.theta == pytest.approx(0.0, abs=1e-3)
    assert rec.abs_theta == pytest.approx(2 / np.pi, abs=1e-3)


def test_time_average_uses_last_window_only():
    t = np.arange(0, 10.0 + 1e-9, 0.5)
    rec = time_average(_traj(t, n_phot=np.where(t >= 6.0, 2.0, 100.0)), window=4.0)
    assert rec.n_phot == 2.0


def test_time_average_errors():
    t = np.arange(0, 10.0 + 1e-9, 0.5)
    with pytest.raises(ValueError):
        time_average(_traj(t), window=20.0)
    bare = _traj(t)
    bare.observables = {}
    with pytest.raises(ValueError):
        time_average(bare, window=1.0)


def test_order_parameter_rejects_empty():
    with pytest.raises(ValueError):
        order_parameter([], [])
