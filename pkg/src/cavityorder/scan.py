"""Two-dimensional parameter sweeps with per-cell time averages.

Every cell runs one (or ``repetitions``) trajectories to ``t_final``,
averages the observables over the final ``avg_window`` and annotates the
result with the effective detuning and the threshold margin evaluated at the
window-averaged atomic positions. Cells are independent; results are placed
by cell index, so completion order never matters.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .cumulants import PhysicalityError
from .integrator import IntegrationError, IntegratorSettings
from .observables import time_average
from .params import (
    PositionsSnapshot,
    SingularityError,
    SystemParams,
    effective_detuning,
    threshold_margin,
)
from .simulation import run_trajectory

SCAN_AXES = ("delta_c", "omega_pump", "g")
ENGINES = ("mean_field", "second_order")
SEED_POLICIES = ("fixed", "cell-indexed")
WORKERS_ENV = "CAVITYORDER_WORKERS"

CELL_COLUMNS = (
    "abs_theta", "theta", "n_phot", "e_kin", "inversion", "delta_eff", "threshold_margin",
)


@dataclass(frozen=True)
class Axis:
    name: str
    lo: float
    hi: float
    count: int

    def __post_init__(self):
        if self.name not in SCAN_AXES:
            raise ValueError(f"axis parameter must be one of {SCAN_AXES}, got {self.name!r}")
        if int(self.count) != self.count or self.count < 2:
            raise ValueError("axis count must be an integer >= 2")
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise ValueError("axis bounds must be finite")

    @property
    def values(self) -> np.ndarray:
        # lo + span * (i / (n-1)) keeps co-located points of refined grids bit-identical
        span = self.hi - self.lo
        return np.array([self.lo + span * (i / (self.count - 1)) for i in range(self.count)])

    @classmethod
    def parse(cls, text: str) -> "Axis":
        """Parse ``name:lo:hi:count``."""
        parts = text.split(":")
        if len(parts) != 4:
            raise ValueError(f"axis must look like name:lo:hi:count, got {text!r}")
        name, lo, hi, count = parts
        return cls(name.strip(), float(lo), float(hi), int(count))

    def to_dict(self):
        return {"name": self.name, "lo": self.lo, "hi": self.hi, "count": self.count}


@dataclass(frozen=True)
class ScanSpec:
    axis1: Axis
    axis2: Axis
    base: SystemParams
    engine: str = "mean_field"
    seed_policy: str = "cell-indexed"
    repetitions: int = 1
    settings: IntegratorSettings = field(default_factory=IntegratorSettings)

    def __post_init__(self):
        if self.axis1.name == self.axis2.name:
            raise ValueError("scan axes must name distinct parameters")
        if self.engine not in ENGINES:
            raise ValueError(f"engine must be one of {ENGINES}")
        if self.seed_policy not in SEED_POLICIES:
            raise ValueError(f"seed policy must be one of {SEED_POLICIES}")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.axis1.count, self.axis2.count)

    def cell_seed(self, i: int, j: int, rep: int = 0) -> int:
        """Seed of repetition ``rep`` in cell ``(i, j)``.

        ``fixed`` reuses the base seed in every cell (offset by the repetition);
        ``cell-indexed`` adds the row-major cell index so cells are independent.
        """
        base = self.base.seed
        if self.seed_policy == "fixed":
            return base + rep
        n_cells = self.axis1.count * self.axis2.count
        return base + rep * n_cells + i * self.axis2.count + j

    def cell_params(self, i: int, j: int, rep: int = 0) -> SystemParams:
        v1 = float(self.axis1.values[i])
        v2 = float(self.axis2.values[j])
        return self.base.replace(**{self.axis1.name: v1, self.axis2.name: v2,
                                    "seed": self.cell_seed(i, j, rep)})

    def to_dict(self):
        return {
            "axis1": self.axis1.to_dict(),
            "axis2": self.axis2.to_dict(),
            "engine": self.engine,
            "seed_policy": self.seed_policy,
            "repetitions": self.repetitions,
            "base": self.base.to_dict(),
            "settings": self.settings.to_dict(),
        }


@dataclass
class CellResult:
    i: int
    j: int
    values: Dict[str, float]
    seeds: List[int]
    status: str = "ok"
    flagged: bool = False

    @property
    def ok(self):
        return self.status == "ok"


@dataclass
class ScanGrid:
    spec: ScanSpec
    cells: List[List[CellResult]]

    def field(self, name: str) -> np.ndarray:
        """Heat-map array of one cell quantity; failed cells are NaN."""
        out = np.full(self.spec.shape, np.nan)
        for row in self.cells:
            for c in row:
                out[c.i, c.j] = c.values.get(name, np.nan)
        return out

    def failed(self) -> List[CellResult]:
        return [c for row in self.cells for c in row if not c.ok]

    def rows(self):
        """Flat records in row-major order, as written to CSV."""
        a1, a2 = self.spec.axis1, self.spec.axis2
        v1, v2 = a1.values, a2.values
        for row in self.cells:
            for c in row:
                rec = {"i": c.i, "j": c.j, a1.name: float(v1[c.i]), a2.name: float(v2[c.j])}
                rec.update({k: c.values.get(k, np.nan) for k in CELL_COLUMNS})
                rec["status"] = c.status
                rec["flagged"] = int(c.flagged)
                rec["seed"] = c.seeds[0]
                yield rec


def _nan_values():
    return {k: float("nan") for k in CELL_COLUMNS}


def _single_run(p: SystemParams, engine: str, settings: IntegratorSettings):
    model, tr = run_trajectory(p, engine=engine, settings=settings)
    rec = time_average(tr, p.avg_window)
    mask = tr.times >= tr.times[-1] - p.avg_window - 1e-9
    sl = model.layout.slice
    x = tr.samples[mask][:, sl("x")].mean(axis=0)
    y = tr.samples[mask][:, sl("y")].mean(axis=0)
    pos = PositionsSnapshot(list(x), list(y))
    try:
        delta = effective_detuning(p, pos)
    except SingularityError:
        delta = float("nan")
    try:
        margin = threshold_margin(p, pos)
    except SingularityError:
        margin = float("nan")
    values = {
        "abs_theta": rec.abs_theta,
        "theta": rec.theta,
        "n_phot": rec.n_phot,
        "e_kin": rec.e_kin,
        "inversion": rec.inversion,
        "delta_eff": delta,
        "threshold_margin": margin,
    }
    return values, bool(np.any(tr.flagged))


def run_cell(spec: ScanSpec, i: int, j: int) -> CellResult:
    """Run every repetition of one cell and average; never raises for run failures."""
    seeds = [spec.cell_seed(i, j, r) for r in range(spec.repetitions)]
    collected = []
    flagged = False
    for r in range(spec.repetitions):
        p = spec.cell_params(i, j, r)
        try:
            values, flag = _single_run(p, spec.engine, spec.settings)
        except PhysicalityError:
            return CellResult(i, j, _nan_values(), seeds, status="physicality")
        except IntegrationError:
            return CellResult(i, j, _nan_values(), seeds, status="integration")
        except (ValueError, ArithmeticError) as exc:
            return CellResult(i, j, _nan_values(), seeds, status=f"error:{type(exc).__name__}")
        collected.append(values)
        flagged = flagged or flag
    avg = {k: float(np.mean([v[k] for v in collected])) for k in CELL_COLUMNS}
    return CellResult(i, j, avg, seeds, flagged=flagged)


def _cell_job(args):
    spec, i, j = args
    return run_cell(spec, i, j)


def default_workers() -> int:
    """Worker count from the environment variable, else the CPU count."""
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError as exc:
            raise ValueError(f"{WORKERS_ENV} must be an integer, got {env!r}") from exc
        if n < 1:
            raise ValueError(f"{WORKERS_ENV} must be >= 1")
        return n
    return os.cpu_count() or 1


def run_scan(spec: ScanSpec, workers: Optional[int] = None,
             order: Optional[Sequence[Tuple[int, int]]] = None, progress=None) -> ScanGrid:
    """Evaluate every cell of ``spec``.

    Parameters
    ----------
    workers : int, optional
        Process count; defaults to :func:`default_workers`. ``1`` runs in
        the calling process.
    order : sequence of (i, j), optional
        Execution order of the cells (a permutation of all cells). The
        returned grid does not depend on it.
    progress : callable, optional
        Called as ``progress(done, total)`` after every finished cell.
    """
    n1, n2 = spec.shape
    all_cells = [(i, j) for i in range(n1) for j in range(n2)]
    if order is None:
        order = all_cells
    elif sorted(order) != all_cells:
        raise ValueError("order must be a permutation of all cells")
    workers = default_workers() if workers is None else int(workers)
    if workers < 1:
        raise ValueError("workers must be >= 1")
    results: Dict[Tuple[int, int], CellResult] = {}
    total = len(order)
    if workers == 1:
        for k, (i, j) in enumerate(order):
            results[(i, j)] = run_cell(spec, i, j)
            if progress:
                progress(k + 1, total)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            jobs = [(spec, i, j) for i, j in order]
            for k, res in enumerate(pool.map(_cell_job, jobs)):
                results[(res.i, res.j)] = res
                if progress:
                    progress(k + 1, total)
    cells = [[results[(i, j)] for j in range(n2)] for i in range(n1)]
    return ScanGrid(spec, cells)
