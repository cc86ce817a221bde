"""Mode functions of the cavity and pump standing waves.

Lengths are measured in units of the atomic wavelength, so the common
wavenumber of pump, cavity and atoms is ``K = 2*pi``.
"""

import numpy as np

K = 2.0 * np.pi


def envelope(p, y):
    """Gaussian transverse profile of the cavity modes, ``exp(-y**2/w0**2)``."""
    return np.exp(-np.square(y) / p.waist**2)


def coupling(p, x, y):
    """Position-dependent atom-cavity coupling ``g cos(kx) exp(-y^2/w0^2)``.

    Works elementwise on arrays.
    """
    return p.g * np.cos(K * np.asarray(x)) * envelope(p, y)


def filter_coupling(p, x, y):
    """Coupling to the sine-shaped filter mode, shifted by a quarter wavelength."""
    return p.g * np.sin(K * np.asarray(x)) * envelope(p, y)


def pump_amplitude(p, y):
    """Transverse standing-wave drive ``Omega cos(ky)``."""
    return p.omega_pump * np.cos(K * np.asarray(y))
