"""Moment equations for transversely pumped two-level atoms in a lossy cavity.

Three right-hand sides are provided, all operating on flat real vectors
(see :mod:`cavityorder.state`):

* :class:`SecondOrderModel` - second-order cumulant closure with classical
  atomic motion in the xy-plane, optionally including a second (sine-shaped)
  filter mode;
* :class:`MeanFieldModel` - first-order closure where all second moments are
  factorized but the excited-state populations stay dynamical.

Positions are in wavelengths, momenta in photon momenta, time in 1/gamma.
"""

from __future__ import annotations

import os

import numpy as np

from .geometry import K, envelope
from .params import SystemParams
from .state import (
    CumulantState,
    MeanFieldState,
    mean_field_layout,
    pair_matrix,
    second_order_layout,
    triu_indices,
)

PHYSICALITY_TOL = 1e-6

_DEBUG = bool(os.environ.get("CAVITYORDER_DEBUG"))


class PhysicalityError(RuntimeError):
    """A state left the physically admissible range by more than the tolerance."""

    def __init__(self, message, violation=None):
        super().__init__(message)
        self.violation = violation


def _mode_functions(p, x, y, two_mode):
    env = envelope(p, y)
    cx = np.cos(K * x)
    sx = np.sin(K * x)
    g_cav = p.g * cx * env
    om = p.omega_pump * np.cos(K * y)
    h = p.g * sx * env if two_mode else None
    return env, cx, sx, g_cav, om, h


class SecondOrderModel:
    """Second-order cumulant equations (optionally with the filter mode).

    Parameters
    ----------
    p : SystemParams
        Physical parameters. ``p.delta_c2`` switches the filter mode on
        unless ``two_mode`` is given explicitly.
    frozen_motion : bool
        Pin the atoms: positions and momenta have zero derivative.
    two_mode : bool, optional
        Override for the filter mode.
    """

    order = 2

    def __init__(self, p: SystemParams, frozen_motion=False, two_mode=None, debug=None):
        self.p = p
        self.n = p.n_atoms
        self.two_mode = p.two_mode if two_mode is None else bool(two_mode)
        if self.two_mode and p.delta_c2 is None:
            raise ValueError("filter mode requested but delta_c2 is not set")
        self.frozen_motion = frozen_motion
        self.debug = _DEBUG if debug is None else debug
        self.layout = second_order_layout(self.n, self.two_mode)
        self.physicality_tol = PHYSICALITY_TOL
        lay = self.layout
        self._sl = {name: lay.slice(name) for name, *_ in lay.blocks}

    # -- vector <-> dataclass -------------------------------------------------
    def state_from_vector(self, vec) -> CumulantState:
        return CumulantState.from_vector(self.layout, vec)

    def vector_from_state(self, s: CumulantState) -> np.ndarray:
        if s.two_mode != self.two_mode or s.n_atoms != self.n:
            raise ValueError("state does not match the model layout")
        return s.to_vector()

    def _c(self, y, name):
        return y[self._sl[name]].view(np.complex128)

    def _r(self, y, name):
        return y[self._sl[name]]

    # -- dynamics --------------------------------------------------------------
    def rhs(self, t, y):
        p = self.p
        y = np.ascontiguousarray(y)
        a = self._c(y, "a_mean")[0]
        sm = self._c(y, "sm")
        n = self._r(y, "n_phot")[0]
        asp = self._c(y, "a_sp")
        pop = self._r(y, "pop")
        pair = self._c(y, "pair")
        x, yy = self._r(y, "x"), self._r(y, "y")
        px, py = self._r(y, "px"), self._r(y, "py")

        env, cx, sx, gm, om, h = _mode_functions(p, x, yy, self.two_mode)
        z = 2.0 * pop - 1.0
        gz = gm * z
        oz = om * z
        rows, cols = triu_indices(self.n)
        full = pair_matrix(pair, self.n)
        gam = p.gamma

        da = -(p.kappa / 2 - 1j * p.delta_c) * a - 1j * np.dot(gm, sm)
        dsm = -(gam / 2 - 1j * p.delta_a) * sm + 1j * gz * a + 1j * oz
        dn = -p.kappa * n - 2.0 * np.dot(gm, asp.imag)
        dasp = (
            -((p.kappa + gam) / 2 + 1j * (p.delta_a - p.delta_c)) * asp
            + 1j * gm * (n - 2.0 * n * pop - pop)
            - 1j * (full @ gm)
            - 1j * oz * a
        )
        dpop = -gam * pop + 2.0 * gm * asp.imag - 2.0 * om * sm.imag
        smc = np.conj(sm)
        aspc = np.conj(asp)
        dpair = (
            -gam * pair
            - 1j * gz[rows] * aspc[cols]
            + 1j * gz[cols] * asp[rows]
            + 1j * oz[cols] * smc[rows]
            - 1j * oz[rows] * sm[cols]
        )

        if self.debug:
            self._check_realness(gm, asp, om, sm, pop)

        out = np.empty_like(y)
        lay = self.layout
        lay.set(out, "a_mean", da)
        lay.set(out, "n_phot", dn)
        lay.set(out, "pop", dpop)

        re_asp = asp.real
        if self.frozen_motion:
            fx = fy = np.zeros(self.n)
            vx = vy = np.zeros(self.n)
        else:
            vx = 2.0 * p.omega_r * px / K
            vy = 2.0 * p.omega_r * py / K
            fx = 2.0 * p.g * sx * env * re_asp
            fy = (4.0 * p.g / (K * p.waist**2)) * cx * yy * env * re_asp \
                + 2.0 * p.omega_pump * np.sin(K * yy) * sm.real

        if self.two_mode:
            b = self._c(y, "b_mean")[0]
            nb = self._r(y, "n_phot_b")[0]
            bsp = self._c(y, "b_sp")
            xab = self._c(y, "ab_cross")[0]
            hz = h * z
            dsm = dsm + 1j * hz * b
            dpop = dpop + 2.0 * h * bsp.imag
            lay.set(out, "pop", dpop)
            dasp = dasp - 1j * h * np.conj(xab) * z
            dpair = dpair - 1j * hz[rows] * np.conj(bsp)[cols] + 1j * hz[cols] * bsp[rows]
            db = -(p.kappa / 2 - 1j * p.delta_c2) * b - 1j * np.dot(h, sm)
            dnb = -p.kappa * nb - 2.0 * np.dot(h, bsp.imag)
            dbsp = (
                -((p.kappa + gam) / 2 + 1j * (p.delta_a - p.delta_c2)) * bsp
                + 1j * h * (nb - 2.0 * nb * pop - pop)
                - 1j * (full @ h)
                - 1j * oz * b
                - 1j * gz * xab
            )
            dxab = -(p.kappa - 1j * (p.delta_c2 - p.delta_c)) * xab \
                + 1j * (np.dot(gm, bsp) - np.dot(h, aspc))
            lay.set(out, "b_mean", db)
            lay.set(out, "n_phot_b", dnb)
            lay.set(out, "b_sp", dbsp)
            lay.set(out, "ab_cross", dxab)
            if not self.frozen_motion:
                re_bsp = bsp.real
                fx = fx - 2.0 * p.g * cx * env * re_bsp
                fy = fy + (4.0 * p.g / (K * p.waist**2)) * sx * yy * env * re_bsp

        lay.set(out, "sm", dsm)
        lay.set(out, "a_sp", dasp)
        lay.set(out, "pair", dpair)
        lay.set(out, "x", vx)
        lay.set(out, "y", vy)
        lay.set(out, "px", fx)
        lay.set(out, "py", fy)
        return out

    def _check_realness(self, gm, asp, om, sm, pop):
        # derivative of real moments written in their raw complex form
        dn_c = 1j * np.sum(gm * (asp - np.conj(asp)))
        dpop_c = -1j * gm * (asp - np.conj(asp)) - 1j * om * (np.conj(sm) - sm)
        if abs(dn_c.imag) > 1e-12 or np.any(np.abs(dpop_c.imag) > 1e-12):
            raise AssertionError("real moment acquired an imaginary derivative")

    # -- diagnostics ------------------------------------------------------------
    def violation(self, y) -> float:
        """How far the state lies outside ``n >= 0`` and ``0 <= pop <= 1``."""
        pop = self._r(y, "pop")
        v = max(0.0, -self._r(y, "n_phot")[0], float(np.max(-pop, initial=0.0)),
                float(np.max(pop - 1.0, initial=0.0)))
        if self.two_mode:
            v = max(v, -self._r(y, "n_phot_b")[0])
        return v

    def check(self, y) -> float:
        v = self.violation(y)
        if not np.isfinite(v) or v > self.physicality_tol:
            raise PhysicalityError(f"unphysical state (violation {v:.3g})", v)
        return v

    def positions(self, y):
        return self._r(y, "x"), self._r(y, "y")

    def momenta(self, y):
        return self._r(y, "px"), self._r(y, "py")

    def photon_number(self, y):
        return self._r(y, "n_phot")[0]

    def photon_number_b(self, y):
        return self._r(y, "n_phot_b")[0] if self.two_mode else float("nan")

    def populations(self, y):
        return self._r(y, "pop")

    def initial_vector(self):
        return init_state(self.p, order=2, two_mode=self.two_mode).to_vector()

    def mirror_half_wavelength(self, y):
        """Shift every atom by half a wavelength along x and flip the cavity sign.

        Maps solutions onto solutions; used to pick the other checkerboard.
        """
        out = np.array(y, dtype=float, copy=True)
        out[self._sl["x"]] += 0.5
        flipped = ["a_mean", "a_sp"]
        if self.two_mode:
            # sin(kx) flips too, so <a^+ b> keeps its sign
            flipped += ["b_mean", "b_sp"]
        for name in flipped:
            out[self._sl[name]] *= -1.0
        return out


class MeanFieldModel:
    """First-order (mean-field) equations; second moments are products of means."""

    order = 1
    two_mode = False

    def __init__(self, p: SystemParams, frozen_motion=False):
        if p.two_mode:
            raise ValueError("the mean-field engine supports the single-mode cavity only")
        self.p = p
        self.n = p.n_atoms
        self.frozen_motion = frozen_motion
        self.layout = mean_field_layout(self.n)
        self.physicality_tol = PHYSICALITY_TOL
        self._sl = {name: self.layout.slice(name) for name, *_ in self.layout.blocks}

    def state_from_vector(self, vec) -> MeanFieldState:
        return MeanFieldState.from_vector(self.layout, vec)

    def vector_from_state(self, s: MeanFieldState) -> np.ndarray:
        return s.to_vector()

    def rhs(self, t, y):
        p = self.p
        y = np.ascontiguousarray(y)
        sl = self._sl
        a = y[sl["a_mean"]].view(np.complex128)[0]
        sm = y[sl["sm"]].view(np.complex128)
        pop = y[sl["pop"]]
        x, yy, px, py = y[sl["x"]], y[sl["y"]], y[sl["px"]], y[sl["py"]]
        env, cx, sx, gm, om, _ = _mode_functions(p, x, yy, False)
        z = 2.0 * pop - 1.0
        asp = a * np.conj(sm)

        da = -(p.kappa / 2 - 1j * p.delta_c) * a - 1j * np.dot(gm, sm)
        dsm = -(p.gamma / 2 - 1j * p.delta_a) * sm + 1j * gm * z * a + 1j * om * z
        dpop = -p.gamma * pop + 2.0 * gm * asp.imag - 2.0 * om * sm.imag

        out = np.empty_like(y)
        lay = self.layout
        lay.set(out, "a_mean", da)
        lay.set(out, "sm", dsm)
        lay.set(out, "pop", dpop)
        if self.frozen_motion:
            zero = np.zeros(self.n)
            for name in ("x", "y", "px", "py"):
                lay.set(out, name, zero)
        else:
            lay.set(out, "x", 2.0 * p.omega_r * px / K)
            lay.set(out, "y", 2.0 * p.omega_r * py / K)
            lay.set(out, "px", 2.0 * p.g * sx * env * asp.real)
            lay.set(out, "py", (4.0 * p.g / (K * p.waist**2)) * cx * yy * env * asp.real
                    + 2.0 * p.omega_pump * np.sin(K * yy) * sm.real)
        return out

    def violation(self, y) -> float:
        pop = y[self._sl["pop"]]
        return max(0.0, float(np.max(-pop, initial=0.0)), float(np.max(pop - 1.0, initial=0.0)))

    def check(self, y) -> float:
        v = self.violation(y)
        if not np.isfinite(v) or v > self.physicality_tol:
            raise PhysicalityError(f"unphysical state (violation {v:.3g})", v)
        return v

    def positions(self, y):
        return y[self._sl["x"]], y[self._sl["y"]]

    def momenta(self, y):
        return y[self._sl["px"]], y[self._sl["py"]]

    def photon_number(self, y):
        a = y[self._sl["a_mean"]]
        return a[0] ** 2 + a[1] ** 2

    def photon_number_b(self, y):
        return float("nan")

    def populations(self, y):
        return y[self._sl["pop"]]

    def initial_vector(self):
        return init_state(self.p, order=1).to_vector()

    def mirror_half_wavelength(self, y):
        out = np.array(y, dtype=float, copy=True)
        out[self._sl["x"]] += 0.5
        out[self._sl["a_mean"]] *= -1.0
        return out


def make_model(p: SystemParams, engine="second_order", frozen_motion=False):
    if engine in ("second_order", "2", 2):
        return SecondOrderModel(p, frozen_motion=frozen_motion)
    if engine in ("mean_field", "1", 1):
        return MeanFieldModel(p, frozen_motion=frozen_motion)
    raise ValueError(f"unknown engine {engine!r}")


def init_state(p: SystemParams, order=2, two_mode=None):
    """Ground-state atoms, zero-mean cavity field, random positions and momenta.

    The main-mode photon number starts at ``p.init_photons`` (0 by default).

    Positions are uniform in ``[-h, h]^2`` and momenta uniform in
    ``[-m, m]`` per axis, drawn from a generator seeded with ``p.seed``.
    """
    n = p.n_atoms
    rng = np.random.default_rng(p.seed)
    h, m = p.init_pos_halfwidth, p.init_mom_halfwidth
    x = h * rng.uniform(-1.0, 1.0, n)
    y = h * rng.uniform(-1.0, 1.0, n)
    px = m * rng.uniform(-1.0, 1.0, n)
    py = m * rng.uniform(-1.0, 1.0, n)
    zc = np.zeros(n, dtype=complex)
    zr = np.zeros(n)
    if order == 1:
        return MeanFieldState(0j, zc, zr.copy(), x, y, px, py)
    two_mode = p.two_mode if two_mode is None else two_mode
    s = CumulantState(
        a_mean=0j, sm=zc, n_phot=float(p.init_photons), a_sp=zc.copy(), pop=zr.copy(),
        pair=np.zeros(n * (n - 1) // 2, dtype=complex), x=x, y=y, px=px, py=py,
    )
    if two_mode:
        s.b_mean = 0j
        s.n_phot_b = 0.0
        s.b_sp = zc.copy()
        s.ab_cross = 0j
    return s


def rhs_second_order(s: CumulantState, p: SystemParams, frozen_motion=False) -> CumulantState:
    """Time derivative of a single-mode :class:`CumulantState`."""
    model = SecondOrderModel(p, frozen_motion=frozen_motion, two_mode=False)
    return model.state_from_vector(model.rhs(0.0, model.vector_from_state(s)))


def rhs_two_mode(s: CumulantState, p: SystemParams, frozen_motion=False) -> CumulantState:
    """Time derivative including the filter-mode sector."""
    model = SecondOrderModel(p, frozen_motion=frozen_motion, two_mode=True)
    return model.state_from_vector(model.rhs(0.0, model.vector_from_state(s)))


def rhs_mean_field(s: MeanFieldState, p: SystemParams, frozen_motion=False) -> MeanFieldState:
    model = MeanFieldModel(p, frozen_motion=frozen_motion)
    return model.state_from_vector(model.rhs(0.0, model.vector_from_state(s)))
