"""Adaptive Dormand-Prince 5(4) integration with fixed-interval sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Callable, Optional

import numpy as np

MIN_STEP = 1e-10


class IntegrationError(RuntimeError):
    """Integration could not proceed; carries the last accepted state."""

    def __init__(self, message, t=None, y=None):
        super().__init__(message)
        self.t = t
        self.y = y


class StepSizeUnderflow(IntegrationError):
    pass


@dataclass(frozen=True)
class IntegratorSettings:
    rel_tol: float = 1e-6
    abs_tol: float = 1e-8
    max_step: float = 1.0
    sample_dt: float = 0.1
    max_steps: int = 10_000_000

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol", "max_step", "sample_dt"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive and finite, got {value!r}")
        if self.sample_dt < MIN_STEP:
            raise ValueError("sample_dt is below the minimum step size")

    def to_dict(self):
        return asdict(self)


@dataclass
class Trajectory:
    """States sampled on a uniform time grid.

    ``violations[k]`` is the largest physicality violation met on any accepted
    step up to sample ``k`` (zero when the model does not report one).
    """

    times: np.ndarray
    samples: np.ndarray
    final_time: float
    final_state: np.ndarray
    violations: np.ndarray
    stats: dict = field(default_factory=dict)
    observables: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.times)

    @property
    def flagged(self):
        return self.violations > 0


# Dormand-Prince tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
# difference between 5th and embedded 4th order weights (7 stages, FSAL)
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
# dense output: y(t + th) = y + h * K^T (P @ [th, th^2, th^3, th^4])
_P = np.array([
    [1.0, -2.8535800653862835, 3.0717434641059005, -1.1270175653862835],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 4.023133379230305, -6.249321565289, 2.675424484351598],
    [0.0, -3.7324019615885042, 10.068970589843675, -5.685526961588504],
    [0.0, 2.5548038301849423, -6.399112377351017, 3.5219323679207912],
    [0.0, -1.3744241142186024, 3.272657752246729, -1.7672812570757455],
    [0.0, 1.3824689317781436, -3.764937863556287, 2.382468931778144],
])


def sample_grid(t0, t_final, sample_dt):
    count = int(math.floor((t_final - t0) / sample_dt + 1e-9))
    return t0 + sample_dt * np.arange(count + 1)


def _initial_step(rhs, t0, y0, f0, settings):
    scale = settings.abs_tol + np.abs(y0) * settings.rel_tol
    d0 = np.sqrt(np.mean((y0 / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, settings.max_step)
    y1 = y0 + h0 * f0
    f1 = rhs(t0 + h0, y1)
    d2 = np.sqrt(np.mean(((f1 - f0) / scale) ** 2)) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return max(min(100 * h0, h1, settings.max_step), MIN_STEP)


def integrate(
    rhs: Callable,
    y0,
    t_final: float,
    settings: Optional[IntegratorSettings] = None,
    check: Optional[Callable] = None,
    t0: float = 0.0,
) -> Trajectory:
    """Integrate ``dy/dt = rhs(t, y)`` from ``t0`` to ``t_final``.

    Parameters
    ----------
    rhs : callable
        ``rhs(t, y) -> dy/dt`` on real 1-d arrays.
    y0 : array_like
        Finite initial state.
    t_final : float
        End time, must exceed ``t0``.
    settings : IntegratorSettings, optional
    check : callable, optional
        Called with every accepted state; returns a non-negative violation
        measure or raises to abort (e.g. a physicality error).

    Returns
    -------
    Trajectory
        Samples on ``t0 + k * sample_dt``, interpolated with the method's
        4th-order dense output inside accepted steps only.

    Raises
    ------
    StepSizeUnderflow
        When the controller needs steps below ``MIN_STEP``.
    """
    settings = settings or IntegratorSettings()
    y = np.array(y0, dtype=float, copy=True)
    if y.ndim != 1:
        raise ValueError("state must be one-dimensional")
    if not np.all(np.isfinite(y)):
        raise ValueError("initial state is not finite")
    if not t_final > t0:
        raise ValueError("t_final must be greater than the start time")

    grid = sample_grid(t0, t_final, settings.sample_dt)
    samples = np.empty((len(grid), y.size))
    violations = np.zeros(len(grid))
    samples[0] = y
    worst = 0.0
    if check is not None:
        worst = max(worst, float(check(y) or 0.0))
    violations[0] = worst
    next_sample = 1

    rtol, atol = settings.rel_tol, settings.abs_tol
    t = float(t0)
    f = np.asarray(rhs(t, y), dtype=float)
    nfev = 1
    h = _initial_step(rhs, t, y, f, settings)
    nfev += 1
    K = np.empty((7, y.size))
    steps = rejected = 0
    factor_max = 5.0

    while t < t_final:
        if steps + rejected >= settings.max_steps:
            raise IntegrationError("maximum number of steps exceeded", t, y.copy())
        h = min(h, settings.max_step, t_final - t)
        last = t + h >= t_final or (t_final - (t + h)) < 1e-12 * max(1.0, abs(t_final))
        if last:
            h = t_final - t
        if h < MIN_STEP and not last:
            raise StepSizeUnderflow(f"step size underflow at t={t:.6g}", t, y.copy())

        K[0] = f
        for s in range(1, 6):
            dy = np.dot(_A[s], K[:s]) * h
            K[s] = rhs(t + _C[s] * h, y + dy)
        y_new = y + h * np.dot(_B, K[:6])
        f_new = np.asarray(rhs(t + h, y_new), dtype=float)
        K[6] = f_new
        nfev += 6

        if np.all(np.isfinite(y_new)) and np.all(np.isfinite(f_new)):
            scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
            err = h * np.dot(_E, K)
            err_norm = float(np.sqrt(np.mean((err / scale) ** 2)))
        else:
            err_norm = math.inf

        if err_norm <= 1.0:
            t_new = t_final if last else t + h
            if check is not None:
                try:
                    worst = max(worst, float(check(y_new) or 0.0))
                except Exception as exc:
                    if isinstance(exc, IntegrationError):
                        raise
                    exc.t = t
                    exc.y = y.copy()
                    raise
            while next_sample < len(grid) and grid[next_sample] <= t_new + 1e-12:
                theta = (grid[next_sample] - t) / h
                theta = min(max(theta, 0.0), 1.0)
                powers = theta ** np.arange(1, 5)
                samples[next_sample] = y + h * np.dot(K.T, _P @ powers)
                violations[next_sample] = worst
                next_sample += 1
            t, y, f = t_new, y_new, f_new
            steps += 1
            if err_norm == 0.0:
                factor = factor_max
            else:
                factor = min(factor_max, 0.9 * err_norm ** -0.2)
            h = h * max(factor, 0.2)
            factor_max = 5.0
        else:
            rejected += 1
            if math.isfinite(err_norm):
                h = h * max(0.2, 0.9 * err_norm ** -0.2)
            else:
                h = h * 0.1
            factor_max = 1.0
            if h < MIN_STEP:
                raise StepSizeUnderflow(f"step size underflow at t={t:.6g}", t, y.copy())

    if next_sample < len(grid):  # only possible through rounding at the end point
        samples[next_sample:] = y
        violations[next_sample:] = worst

    return Trajectory(
        times=grid,
        samples=samples,
        final_time=t,
        final_state=y,
        violations=violations,
        stats={"nfev": nfev, "steps": steps, "rejected": rejected},
    )
