"""Exact master-equation reference for a few pinned atoms.

The density matrix lives on ``fock(a) [x fock(b)] x qubit^N`` with the
cavity mode(s) first. Atom basis: index 0 = ground, 1 = excited.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from .geometry import coupling, filter_coupling, pump_amplitude
from .params import PositionsSnapshot, SystemParams

DIM_CAP = 4096


class DimensionError(ValueError):
    pass


class CutoffNotConverged(RuntimeError):
    pass


class GridMismatch(ValueError):
    pass


@dataclass(frozen=True)
class HilbertSpec:
    n_atoms: int
    positions: PositionsSnapshot
    fock_cutoff: int = 10
    modes: int = 1
    dim_cap: int = DIM_CAP

    def __post_init__(self):
        if not 1 <= self.n_atoms <= 3:
            raise DimensionError("the oracle handles 1 to 3 atoms")
        if self.fock_cutoff < 2:
            raise DimensionError("fock_cutoff must be >= 2")
        if self.modes not in (1, 2):
            raise DimensionError("modes must be 1 or 2")
        if len(self.positions) != self.n_atoms:
            raise DimensionError("positions do not match n_atoms")
        if self.dim > self.dim_cap:
            raise DimensionError(f"Hilbert dimension {self.dim} exceeds cap {self.dim_cap}")

    @property
    def dim(self):
        return (self.fock_cutoff + 1) ** self.modes * 2**self.n_atoms

    def with_cutoff(self, cutoff):
        return HilbertSpec(self.n_atoms, self.positions, cutoff, self.modes, self.dim_cap)


def _destroy(n):
    return np.diag(np.sqrt(np.arange(1, n)), 1).astype(complex)


_SM = np.array([[0, 1], [0, 0]], dtype=complex)  # |g><e|


def _embed(factors):
    out = np.array([[1.0 + 0j]])
    for f in factors:
        out = np.kron(out, f)
    return out


class Operators:
    """Ladder operators of the truncated space."""

    def __init__(self, h: HilbertSpec):
        nf = h.fock_cutoff + 1
        ids = [np.eye(nf)] * h.modes + [np.eye(2)] * h.n_atoms

        def place(index, op):
            factors = list(ids)
            factors[index] = op
            return _embed(factors)

        self.a = place(0, _destroy(nf))
        self.b = place(1, _destroy(nf)) if h.modes == 2 else None
        self.sm = [place(h.modes + i, _SM) for i in range(h.n_atoms)]
        self.dim = h.dim


class Generator:
    """Liouvillian action ``rho -> -i[H, rho] + L_kappa[rho] + L_gamma[rho]``.

    ``closed=True`` drops every dissipator (the lossless limit, which the
    parameter validation cannot express because it requires kappa > 0).
    """

    def __init__(self, p: SystemParams, h: HilbertSpec, closed=False):
        self.p, self.h = p, h
        self.closed = closed
        ops = Operators(h)
        self.ops = ops
        pos = h.positions
        g = coupling(p, pos.x, pos.y)
        om = pump_amplitude(p, pos.y)
        a = ops.a
        H = -p.delta_c * a.conj().T @ a
        for i, s in enumerate(ops.sm):
            sp = s.conj().T
            H = H - p.delta_a * sp @ s + g[i] * (a @ sp + a.conj().T @ s) + om[i] * (sp + s)
        c_ops = [np.sqrt(p.kappa) * a] + [np.sqrt(p.gamma) * s for s in ops.sm]
        if h.modes == 2:
            if p.delta_c2 is None:
                raise ValueError("two-mode oracle needs delta_c2")
            b = ops.b
            hb = filter_coupling(p, pos.x, pos.y)
            H = H - p.delta_c2 * b.conj().T @ b
            for i, s in enumerate(ops.sm):
                H = H + hb[i] * (b @ s.conj().T + b.conj().T @ s)
            c_ops.append(np.sqrt(p.kappa) * b)
        if closed:
            c_ops = []
        self.H = H
        self.c_ops = c_ops
        self.h_eff = H - 0.5j * sum((c.conj().T @ c for c in c_ops), np.zeros_like(H))

    def __call__(self, rho):
        out = -1j * (self.h_eff @ rho - rho @ self.h_eff.conj().T)
        for c in self.c_ops:
            out += c @ rho @ c.conj().T
        return out

    def expectation_derivatives(self, rho):
        """Exact time derivatives of the tracked moments at ``rho``."""
        return expectations(self.ops, self(rho), self.h.n_atoms)


def build_generator(p: SystemParams, h: HilbertSpec, closed=False) -> Generator:
    return Generator(p, h, closed)


def ground_state(h: HilbertSpec):
    rho = np.zeros((h.dim, h.dim), dtype=complex)
    rho[0, 0] = 1.0
    return rho


def coherent_ket(alpha, cutoff):
    n = np.arange(cutoff + 1)
    logfact = np.array([np.sum(np.log(np.arange(1, k + 1))) for k in n])
    amp = np.exp(-abs(alpha) ** 2 / 2 - 0.5 * logfact) * np.power(complex(alpha), n)
    return amp.astype(complex)


def atom_density(pop, coherence):
    """Single-atom density matrix with ``<s+s-> = pop`` and ``<s-> = coherence``."""
    # <s-> = tr(s- rho) = rho[e, g]
    return np.array([[1 - pop, np.conj(coherence)], [coherence, pop]], dtype=complex)


def product_state(h: HilbertSpec, alpha=0.0, atoms=(), beta=None):
    """Coherent field(s) times a product of single-atom states ``(pop, coherence)``."""
    psi_a = coherent_ket(alpha, h.fock_cutoff)
    factors = [np.outer(psi_a, psi_a.conj())]
    if h.modes == 2:
        psi_b = coherent_ket(0.0 if beta is None else beta, h.fock_cutoff)
        factors.append(np.outer(psi_b, psi_b.conj()))
    atoms = list(atoms) or [(0.0, 0.0)] * h.n_atoms
    factors += [atom_density(pp, c) for pp, c in atoms]
    return _embed(factors)


def excited_state(h: HilbertSpec, which=(0,)):
    atoms = [(1.0, 0.0) if i in which else (0.0, 0.0) for i in range(h.n_atoms)]
    return product_state(h, 0.0, atoms)


def _ev(op, rho):
    return np.einsum("ij,ji->", op, rho)


def expectations(ops: Operators, rho, n_atoms) -> dict:
    """Moments named as in the cumulant state: a_mean, sm, n_phot, a_sp, pop, pair, ..."""
    a = ops.a
    ad = a.conj().T
    sm = ops.sm
    sp = [s.conj().T for s in sm]
    out = {
        "a_mean": _ev(a, rho),
        "sm": np.array([_ev(s, rho) for s in sm]),
        "n_phot": _ev(ad @ a, rho).real,
        "a_sp": np.array([_ev(a @ sp[i], rho) for i in range(n_atoms)]),
        "pop": np.array([_ev(sp[i] @ sm[i], rho).real for i in range(n_atoms)]),
        "pair": np.array([_ev(sp[m] @ sm[j], rho)
                          for m in range(n_atoms) for j in range(m + 1, n_atoms)], dtype=complex),
    }
    if ops.b is not None:
        b = ops.b
        out["b_mean"] = _ev(b, rho)
        out["n_phot_b"] = _ev(b.conj().T @ b, rho).real
        out["b_sp"] = np.array([_ev(b @ sp[i], rho) for i in range(n_atoms)])
        out["ab_cross"] = _ev(ad @ b, rho)
    return out


@dataclass
class OracleSeries:
    times: np.ndarray
    values: dict
    trace_error: float = 0.0
    hermiticity_error: float = 0.0
    min_eigenvalue: float = 0.0


def _check_density(rho):
    tr_err = abs(np.trace(rho) - 1.0)
    herm = float(np.max(np.abs(rho - rho.conj().T)))
    eig_min = float(np.min(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))))
    return tr_err, herm, eig_min


def evolve_density(p, h, t_grid, rho0=None, rtol=1e-10, atol=1e-12, closed=False):
    """Integrate the master equation; returns the density matrices on ``t_grid``."""
    gen = build_generator(p, h, closed)
    rho0 = ground_state(h) if rho0 is None else np.asarray(rho0, dtype=complex)
    dim = h.dim
    t_grid = np.asarray(t_grid, dtype=float)

    def f(t, v):
        return gen(v.reshape(dim, dim)).ravel()

    sol = solve_ivp(f, (t_grid[0], t_grid[-1]), rho0.ravel(), method="DOP853",
                    t_eval=t_grid, rtol=rtol, atol=atol)
    if not sol.success:
        raise RuntimeError(f"master equation integration failed: {sol.message}")
    return gen, [sol.y[:, k].reshape(dim, dim) for k in range(len(t_grid))]


def evolve_expectations(p: SystemParams, h: HilbertSpec, t_grid, rho0=None,
                        check_convergence=True, rtol=1e-10, atol=1e-12,
                        closed=False) -> OracleSeries:
    """Expectation values of the cumulant variables along the exact evolution.

    Raises
    ------
    CutoffNotConverged
        If raising the Fock cutoff by 2 changes the photon number by more than 1%.
    """
    gen, rhos = evolve_density(p, h, t_grid, rho0, rtol, atol, closed)
    series = _collect(gen.ops, rhos, h.n_atoms)
    tr_err = herm = 0.0
    eig_min = np.inf
    for rho in rhos:
        e1, e2, e3 = _check_density(rho)
        tr_err, herm, eig_min = max(tr_err, e1), max(herm, e2), min(eig_min, e3)
    if tr_err > 1e-8 or herm > 1e-10 or eig_min < -1e-8:
        raise RuntimeError(
            f"density matrix diagnostics failed: trace {tr_err:.2e}, "
            f"hermiticity {herm:.2e}, min eigenvalue {eig_min:.2e}")
    out = OracleSeries(np.asarray(t_grid, dtype=float), series, tr_err, herm, eig_min)
    if check_convergence and rho0 is None:
        finer = h.with_cutoff(h.fock_cutoff + 2)
        gen2, rhos2 = evolve_density(p, finer, t_grid, None, rtol, atol, closed)
        n1 = series["n_phot"]
        n2 = np.array([_ev(gen2.ops.a.conj().T @ gen2.ops.a, r).real for r in rhos2])
        scale = max(float(np.max(np.abs(n2))), 1e-12)
        if np.max(np.abs(n1 - n2)) > 0.01 * scale:
            raise CutoffNotConverged(
                f"photon number changes by more than 1% when the cutoff is raised to "
                f"{finer.fock_cutoff}")
    return out


def _collect(ops, rhos, n_atoms):
    rows = [expectations(ops, rho, n_atoms) for rho in rhos]
    return {k: np.array([r[k] for r in rows]) for k in rows[0]}


def cumulant_series(model, samples) -> dict:
    """Cumulant-model samples rearranged into oracle-style named series."""
    samples = np.atleast_2d(samples)
    lay = model.layout
    out = {}
    for name, *_ in lay.blocks:
        if name in ("x", "y", "px", "py"):
            continue
        vals = np.array([lay.get(np.ascontiguousarray(r), name) for r in samples])
        if name in ("a_mean", "n_phot", "b_mean", "n_phot_b", "ab_cross"):
            vals = vals[:, 0]
        out[name] = vals
    if "n_phot" not in out:  # mean field: factorized photon number
        out["n_phot"] = np.abs(out["a_mean"]) ** 2
    return out


@dataclass
class ComparisonReport:
    errors: dict
    tolerances: dict
    passed: dict = field(default_factory=dict)

    @property
    def ok(self):
        return all(self.passed.values())

    def flagged(self):
        return [k for k, v in self.passed.items() if not v]

    def to_dict(self):
        return {
            "ok": self.ok,
            "variables": {
                k: {"max_rel_error": self.errors[k], "rtol": self.tolerances[k][0],
                    "floor": self.tolerances[k][1], "pass": self.passed[k]}
                for k in self.errors
            },
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def relative_error(reference, value, floor):
    """Largest ``|value - reference| / max(|reference|, floor)`` over all entries."""
    reference = np.asarray(reference)
    value = np.asarray(value)
    denom = np.maximum(np.abs(reference), floor)
    if reference.size == 0:
        return 0.0
    return float(np.max(np.abs(value - reference) / denom))


def _unwrap(series, times):
    if isinstance(series, OracleSeries):
        return series.values, series.times
    return series, times


def compare_to_cumulant(oracle_series, cumulant_series, tolerances, times=None) -> ComparisonReport:
    """Per-variable maximum relative error with absolute floor.

    Parameters
    ----------
    oracle_series, cumulant_series : OracleSeries or dict
        Named series on a common time grid.
    tolerances : dict
        ``name -> (rtol, floor)``; only these variables are compared.
    """
    o_vals, o_t = _unwrap(oracle_series, None)
    c_vals, c_t = _unwrap(cumulant_series, times)
    if o_t is not None and c_t is not None:
        if len(o_t) != len(c_t) or not np.allclose(o_t, c_t, rtol=0, atol=1e-9):
            raise GridMismatch("oracle and cumulant series are on different time grids")
    errors, passed = {}, {}
    for name, (rtol, floor) in tolerances.items():
        ov, cv = np.asarray(o_vals[name]), np.asarray(c_vals[name])
        if ov.shape != cv.shape:
            raise GridMismatch(f"shape mismatch for {name}: {ov.shape} vs {cv.shape}")
        errors[name] = relative_error(ov, cv, floor)
        passed[name] = errors[name] <= rtol
    return ComparisonReport(errors, dict(tolerances), passed)
