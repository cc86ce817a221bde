"""Single-trajectory driver shared by the CLI, scans and spectra."""

from __future__ import annotations

import numpy as np

from .cumulants import make_model
from .integrator import IntegratorSettings, integrate
from .observables import observable_series


def run_trajectory(p, engine="second_order", settings=None, frozen_motion=False,
                   y0=None, model=None):
    """Integrate one trajectory from the seeded initial state to ``p.t_final``.

    Returns ``(model, trajectory)``; the trajectory carries the observable
    streams used for time averaging.
    """
    settings = settings or IntegratorSettings()
    if model is None:
        model = make_model(p, engine, frozen_motion=frozen_motion)
    if y0 is None:
        y0 = model.initial_vector()
    tr = integrate(model.rhs, np.asarray(y0, dtype=float), p.t_final, settings,
                   check=model.check)
    tr.observables = observable_series(model, tr.samples)
    return model, tr
