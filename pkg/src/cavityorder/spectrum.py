"""Cavity output spectra from two-time correlations.

The correlation ``g1(tau) = <c^+(t0 + tau) c(t0)>`` of cavity mode ``c``
(main mode ``a`` or filter mode ``b``) is propagated with the quantum
regression theorem. The regression vector

    G_a = <a^+(t0+tau) c(t0)>,  C_m = <s+_m(t0+tau) c(t0)>,  [G_b = <b^+(t0+tau) c(t0)>]

obeys the same linear equations as ``<a^+>, <s+_m>, <b^+>``. Its
coefficients (couplings, populations) come from the single-time system,
which keeps evolving, atomic motion included, alongside it.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.signal import find_peaks, peak_widths

from .cumulants import SecondOrderModel
from .geometry import K, envelope
from .integrator import IntegratorSettings, integrate

DEFAULT_SPAN = 200.0
DEFAULT_DTAU = 0.02
STATIONARITY_TOL = 0.2


class NonStationaryWarning(UserWarning):
    pass


@dataclass
class CorrelationSeries:
    tau: np.ndarray
    g1: np.ndarray
    t0: float
    mode_tag: str
    n_start: float = 0.0
    n_end: float = 0.0
    warnings: List[str] = field(default_factory=list)

    @property
    def dtau(self):
        return float(self.tau[1] - self.tau[0])

    @property
    def span(self):
        return float(self.tau[-1] - self.tau[0])


@dataclass
class SpectrumResult:
    omega: np.ndarray
    s: np.ndarray
    s_raw: np.ndarray
    normalized: bool = True

    @property
    def resolution(self):
        return float(self.omega[1] - self.omega[0])


@dataclass(frozen=True)
class Feature:
    kind: str  # "peak" or "dip"
    position: float
    width: float
    prominence: float
    height: float

    def to_dict(self):
        return {"kind": self.kind, "position": self.position, "width": self.width,
                "prominence": self.prominence, "height": self.height}


class RegressionModel:
    """Single-time second-order system augmented by the regression vector."""

    def __init__(self, base: SecondOrderModel, mode_tag="main", source=0j):
        if mode_tag not in ("main", "filter"):
            raise ValueError("mode_tag must be 'main' or 'filter'")
        if mode_tag == "filter" and not base.two_mode:
            raise ValueError("filter-mode spectrum needs the two-mode model")
        self.base = base
        self.p = base.p
        self.n = base.n
        self.mode_tag = mode_tag
        self.source = complex(source)  # <c(t0)>
        self.offset = base.layout.size
        self.n_reg = 1 + self.n + (1 if base.two_mode else 0)
        self.size = self.offset + 2 * self.n_reg

    def seed(self, y0):
        """Regression vector at tau = 0 from the second moments at t0."""
        lay = self.base.layout
        y0 = np.ascontiguousarray(y0, dtype=float)
        two = self.base.two_mode
        if self.mode_tag == "main":
            ga = lay.get(y0, "n_phot")[0] + 0j
            c = lay.get(y0, "a_sp").copy()
            gb = np.conj(lay.get(y0, "ab_cross")[0]) if two else None
        else:
            ga = lay.get(y0, "ab_cross")[0]
            c = lay.get(y0, "b_sp").copy()
            gb = lay.get(y0, "n_phot_b")[0] + 0j
        reg = np.concatenate([[ga], c] + ([[gb]] if two else []))
        out = np.empty(self.size)
        out[: self.offset] = y0
        out[self.offset:] = reg.view(float)
        return out

    def rhs(self, t, y):
        p = self.p
        y = np.ascontiguousarray(y)
        d = np.empty_like(y)
        d[: self.offset] = self.base.rhs(t, y[: self.offset])
        reg = y[self.offset:].view(np.complex128)
        lay = self.base.layout
        x, yy = lay.get(y, "x"), lay.get(y, "y")
        pop = lay.get(y, "pop")
        env = envelope(p, yy)
        gm = p.g * np.cos(K * x) * env
        om = p.omega_pump * np.cos(K * yy)
        z = 2.0 * pop - 1.0
        ga = reg[0]
        c = reg[1 : 1 + self.n]
        dreg = np.empty_like(reg)
        dreg[0] = -(p.kappa / 2 + 1j * p.delta_c) * ga + 1j * np.dot(gm, c)
        field_term = gm * ga
        if self.base.two_mode:
            h = p.g * np.sin(K * x) * env
            gb = reg[-1]
            dreg[-1] = -(p.kappa / 2 + 1j * p.delta_c2) * gb + 1j * np.dot(h, c)
            field_term = field_term + h * gb
        dreg[1 : 1 + self.n] = (
            -(p.gamma / 2 + 1j * p.delta_a) * c
            - 1j * z * field_term
            - 1j * om * z * self.source
        )
        d[self.offset:] = dreg.view(float)
        return d

    def g1(self, samples):
        reg = np.ascontiguousarray(samples[:, self.offset:]).view(np.complex128)
        return reg[:, -1] if self.mode_tag == "filter" else reg[:, 0]


def correlation_function(state, p, span=DEFAULT_SPAN, dtau=DEFAULT_DTAU, mode_tag="main",
                         t0=0.0, model=None, settings=None,
                         subtract_coherent=False) -> CorrelationSeries:
    """Propagate ``g1(tau)`` from the single-time second-order state at ``t0``.

    Parameters
    ----------
    state : array_like or CumulantState
        Second-order state at ``t0`` (flat vector or dataclass).
    p : SystemParams
    span, dtau : float
        Length and step of the uniform tau grid.
    mode_tag : {"main", "filter"}
    subtract_coherent : bool
        Return the connected correlation ``g1 - <c^+(t0+tau)><c(t0)>``,
        i.e. drop the coherently scattered part. Its transform is the
        incoherent spectrum, which decays even when the mean field wanders
        with the atomic motion.
    """
    model = model or SecondOrderModel(p)
    y0 = state.to_vector() if hasattr(state, "to_vector") else np.asarray(state, dtype=float)
    lay = model.layout
    y0 = np.ascontiguousarray(y0, dtype=float)
    name = "a_mean" if mode_tag == "main" else "b_mean"
    if name not in lay:
        raise ValueError(f"state has no {name} for mode {mode_tag!r}")
    source = lay.get(y0, name)[0]
    reg = RegressionModel(model, mode_tag, source)
    base = settings or IntegratorSettings()
    settings = IntegratorSettings(rel_tol=base.rel_tol, abs_tol=base.abs_tol,
                                  max_step=base.max_step, sample_dt=dtau)
    tr = integrate(reg.rhs, reg.seed(y0), span, settings, check=model.check)
    g1 = reg.g1(tr.samples)
    if subtract_coherent:
        mean = np.ascontiguousarray(tr.samples[:, lay.slice(name)]).view(np.complex128)[:, 0]
        g1 = g1 - np.conj(mean) * source
    nname = "n_phot" if mode_tag == "main" else "n_phot_b"
    single = tr.samples[:, : reg.offset]
    n_series = single[:, lay.slice(nname)][:, 0]
    series = CorrelationSeries(tau=tr.times.copy(), g1=g1.copy(), t0=t0, mode_tag=mode_tag)
    k = max(1, len(n_series) // 20)
    series.n_start = float(np.mean(n_series[:k]))
    series.n_end = float(np.mean(n_series[-k:]))
    ref = max(abs(series.n_start), 1e-300)
    if abs(series.n_end - series.n_start) > STATIONARITY_TOL * ref:
        msg = (f"photon number drifted from {series.n_start:.4g} to {series.n_end:.4g} "
               f"during the correlation span")
        series.warnings.append(msg)
        warnings.warn(msg, NonStationaryWarning, stacklevel=2)
    return series


def average_correlations(series_list) -> CorrelationSeries:
    """Mean of several correlation series taken at different start times."""
    first = series_list[0]
    if any(len(s.g1) != len(first.g1) for s in series_list):
        raise ValueError("correlation series have different lengths")
    g1 = np.mean([s.g1 for s in series_list], axis=0)
    out = CorrelationSeries(first.tau, g1, first.t0, first.mode_tag,
                            float(np.mean([s.n_start for s in series_list])),
                            float(np.mean([s.n_end for s in series_list])))
    for s in series_list:
        out.warnings.extend(s.warnings)
    return out


def spectrum_from_g1(c: CorrelationSeries, normalize=True, apodization=None) -> SpectrumResult:
    """One-sided transform ``S(w) = 2 Re int_0^T exp(-i w tau) g1(tau) dtau``.

    Uses the trapezoidal rule on the uniform tau grid and returns ``S`` on the
    symmetric frequency grid ``w_j = 2 pi j / T`` up to the Nyquist frequency.

    Parameters
    ----------
    apodization : float, optional
        Decay time of an exponential window ``exp(-tau/apodization)``;
        broadens every line by ``2/apodization`` (FWHM).
    """
    tau = np.asarray(c.tau, dtype=float)
    g = np.asarray(c.g1, dtype=complex)
    if len(tau) < 3:
        raise ValueError("need at least three tau samples")
    dtau = tau[1] - tau[0]
    if not np.allclose(np.diff(tau), dtau, rtol=1e-8, atol=1e-12):
        raise ValueError("tau grid must be uniform")
    if apodization is not None:
        g = g * np.exp(-(tau - tau[0]) / apodization)
    length = len(g) - 1
    span = length * dtau
    # sum_{k<L} g_k e^{-i w_j tau_k}; the last sample has phase exactly 1
    dft = np.fft.fft(g[:length])
    half = (length - 1) // 2
    j = np.arange(-half, half + 1)
    integral = dtau * (dft[j % length] + 0.5 * (g[-1] - g[0]))
    s_raw = 2.0 * integral.real
    omega = 2.0 * np.pi * j / span
    peak = np.max(np.abs(s_raw))
    s = s_raw / peak if (normalize and peak > 0) else s_raw.copy()
    return SpectrumResult(omega=omega, s=s, s_raw=s_raw, normalized=bool(normalize and peak > 0))


def _refine(values, i):
    """Quadratic interpolation of an extremum around sample ``i``."""
    if i <= 0 or i >= len(values) - 1:
        return 0.0, values[i]
    ym, y0, yp = values[i - 1], values[i], values[i + 1]
    denom = ym - 2 * y0 + yp
    if denom == 0:
        return 0.0, y0
    shift = 0.5 * (ym - yp) / denom
    shift = max(-0.5, min(0.5, shift))
    return shift, y0 - 0.25 * (ym - yp) * shift


def locate_features(s: SpectrumResult, peak_prominence=0.01, dip_prominence=0.01,
                    window=None, relative_to="max") -> List[Feature]:
    """Local maxima and minima with sub-bin positions, widths and prominences.

    Prominences are fractions of the largest value of ``s`` (``relative_to="max"``)
    or of the largest value inside ``window`` (``relative_to="window"``).
    ``window = (lo, hi)`` restricts the search to that frequency range.
    """
    omega, vals = np.asarray(s.omega), np.asarray(s.s, dtype=float)
    if window is not None:
        mask = (omega >= window[0]) & (omega <= window[1])
        omega, vals = omega[mask], vals[mask]
    if len(vals) < 3:
        return []
    scale = float(np.max(np.abs(vals))) if relative_to == "window" else float(np.max(np.abs(s.s)))
    dw = float(omega[1] - omega[0])
    found = []
    for kind, sign, prom in (("peak", 1.0, peak_prominence), ("dip", -1.0, dip_prominence)):
        data = sign * vals
        idx, props = find_peaks(data, prominence=prom * scale)
        if len(idx) == 0:
            continue
        widths = peak_widths(data, idx, rel_height=0.5, prominence_data=(
            props["prominences"], props["left_bases"], props["right_bases"]))[0]
        for i, w, pr in zip(idx, widths, props["prominences"]):
            shift, height = _refine(data, i)
            found.append(Feature(kind, float(omega[i] + shift * dw), float(w * dw),
                                 float(pr / scale) if scale else 0.0, float(sign * height)))
    found.sort(key=lambda f: f.position)
    return found


@dataclass
class SpectrumRun:
    correlation: CorrelationSeries
    spectrum: SpectrumResult
    features: List[Feature]
    t0: float
    final_state: np.ndarray


def spectrum_pipeline(p, t0=None, span=DEFAULT_SPAN, dtau=DEFAULT_DTAU, mode_tag="main",
                      settings=None, repeats=1, spacing=None, apodization=None,
                      normalize=True, feature_kwargs=None, y0=None,
                      subtract_coherent=False) -> SpectrumRun:
    """Evolve the second-order system to ``t0`` and compute the output spectrum.

    With ``repeats > 1`` the correlation is recomputed at ``t0 + k*spacing``
    and averaged before the transform.
    """
    from .simulation import run_trajectory

    t0 = p.t_final if t0 is None else t0
    if t0 < 0:
        raise ValueError("t0 must be >= 0")
    model = SecondOrderModel(p)
    if t0 == 0:
        state = model.initial_vector() if y0 is None else np.asarray(y0, dtype=float)
    else:
        _, tr = run_trajectory(p.replace(t_final=t0), settings=settings, model=model, y0=y0)
        state = tr.final_state
    spacing = span if spacing is None else spacing
    series = []
    t = t0
    for k in range(repeats):
        if k > 0:
            tr = integrate(model.rhs, state, t + spacing, settings or IntegratorSettings(),
                           check=model.check, t0=t)
            state, t = tr.final_state, tr.final_time
        series.append(correlation_function(state, p, span, dtau, mode_tag, t0=t,
                                           model=model, settings=settings,
                                           subtract_coherent=subtract_coherent))
    corr = series[0] if repeats == 1 else average_correlations(series)
    spec = spectrum_from_g1(corr, normalize=normalize, apodization=apodization)
    feats = locate_features(spec, **(feature_kwargs or {}))
    return SpectrumRun(corr, spec, feats, t0, state)
