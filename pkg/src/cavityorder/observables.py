"""Order parameter, kinetic energy, inversion and windowed time averages."""

from __future__ import annotations

from dataclasses import dataclass, asdict
from typing import Optional

import numpy as np

from .geometry import K

DEFAULT_WINDOW = 30.0
# presentation cap for kinetic-energy heat maps, in recoil energies
EKIN_DISPLAY_CAP = 10.0

OBSERVABLE_NAMES = ("theta", "abs_theta", "e_kin", "n_phot", "inversion", "n_phot_b")


@dataclass(frozen=True)
class ObservableRecord:
    theta: float
    abs_theta: float
    e_kin: float
    n_phot: float
    inversion: float
    n_phot_b: Optional[float] = None

    def to_dict(self):
        return asdict(self)


def order_parameter(x, y) -> float:
    """Checkerboard order parameter ``mean(cos(kx) cos(ky))``, in [-1, 1]."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size == 0:
        raise ValueError("order parameter needs at least one atom")
    return float(np.mean(np.cos(K * x) * np.cos(K * y)))


def kinetic_energy(px, py, p=None, units="recoil") -> float:
    """Mean kinetic energy per atom for momenta given in photon momenta.

    With ``k^2/2m = omega_r`` the energy of momentum ``p`` (in units of
    hbar k) is ``p^2`` recoil energies. ``units="rate"`` multiplies by
    ``p.omega_r`` to express it in units of gamma.
    """
    px = np.asarray(px, dtype=float)
    py = np.asarray(py, dtype=float)
    if px.size == 0:
        raise ValueError("kinetic energy needs at least one atom")
    e = float(np.mean(px**2 + py**2))
    if units == "recoil":
        return e
    if units == "rate":
        return e * p.omega_r
    raise ValueError(f"unknown units {units!r}")


def inversion(pop) -> float:
    """Ensemble-averaged ``<s_z> = 2 <s+ s-> - 1``."""
    return float(np.mean(2.0 * np.asarray(pop) - 1.0))


def observe(model, y) -> ObservableRecord:
    x, yy = model.positions(y)
    px, py = model.momenta(y)
    theta = order_parameter(x, yy)
    nb = model.photon_number_b(y) if model.two_mode else None
    return ObservableRecord(
        theta=theta,
        abs_theta=abs(theta),
        e_kin=kinetic_energy(px, py),
        n_phot=float(model.photon_number(y)),
        inversion=inversion(model.populations(y)),
        n_phot_b=None if nb is None else float(nb),
    )


def observable_series(model, samples) -> dict:
    """Observables for every row of ``samples`` as a dict of arrays."""
    samples = np.atleast_2d(samples)
    sl = model.layout.slice
    x, y = samples[:, sl("x")], samples[:, sl("y")]
    px, py = samples[:, sl("px")], samples[:, sl("py")]
    theta = np.mean(np.cos(K * x) * np.cos(K * y), axis=1)
    out = {
        "theta": theta,
        "abs_theta": np.abs(theta),
        "e_kin": np.mean(px**2 + py**2, axis=1),
        "n_phot": np.array([model.photon_number(r) for r in samples], dtype=float),
        "inversion": np.mean(2.0 * samples[:, sl("pop")] - 1.0, axis=1),
    }
    if model.two_mode:
        out["n_phot_b"] = samples[:, sl("n_phot_b")][:, 0].copy()
    return out


def time_average(tr, window: float = DEFAULT_WINDOW) -> ObservableRecord:
    """Arithmetic mean of each observable over the last ``window`` time units.

    Both the signed order parameter and its modulus are averaged.
    """
    obs = tr.observables
    if not obs:
        raise ValueError("trajectory carries no observables")
    times = np.asarray(tr.times)
    span = times[-1] - times[0]
    if window > span + 1e-9:
        raise ValueError(f"window {window} exceeds trajectory span {span}")
    mask = times >= times[-1] - window - 1e-9
    if not np.any(mask):
        raise ValueError("empty averaging window")
    avg = {name: float(np.mean(np.asarray(v)[mask])) for name, v in obs.items()}
    return ObservableRecord(
        theta=avg["theta"],
        abs_theta=avg["abs_theta"],
        e_kin=avg["e_kin"],
        n_phot=avg["n_phot"],
        inversion=avg["inversion"],
        n_phot_b=avg.get("n_phot_b"),
    )


def capped_energy(e_kin, cap=EKIN_DISPLAY_CAP):
    """Clip kinetic energies for display; stored data are never capped."""
    return np.minimum(np.asarray(e_kin, dtype=float), cap)
