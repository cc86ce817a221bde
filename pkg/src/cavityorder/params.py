"""Physical parameters, configuration files and threshold diagnostics.

Units: the spontaneous emission rate ``gamma`` is the rate unit and must be 1;
lengths are in wavelengths, momenta in units of the photon momentum, and
energies in units of the recoil energy.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional

import numpy as np

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

from .geometry import coupling


class ConfigError(ValueError):
    """Raised for malformed or invalid parameter documents."""


class MissingKeyError(ConfigError):
    pass


class UnknownKeyError(ConfigError):
    pass


class RangeError(ConfigError):
    pass


class SingularityError(ValueError):
    """A diagnostic is undefined at the requested parameters."""


REQUIRED_KEYS = (
    "n_atoms",
    "g",
    "kappa",
    "omega_pump",
    "delta_a",
    "delta_c",
    "waist",
    "omega_r",
)


@dataclass(frozen=True)
class SystemParams:
    """Complete parameter set of one simulation.

    ``delta_c2 = None`` means the filter mode is absent. ``init_photons`` is an
    incoherent (zero-mean) photon number in the main mode at t = 0; the
    mean-field engine, which has no photon-number variable, ignores it.
    """

    n_atoms: int
    g: float
    kappa: float
    omega_pump: float
    delta_a: float
    delta_c: float
    waist: float
    omega_r: float
    gamma: float = 1.0
    delta_c2: Optional[float] = None
    seed: int = 0
    t_final: float = 200.0
    avg_window: float = 30.0
    init_pos_halfwidth: float = 2.0
    init_mom_halfwidth: float = 3.0
    init_photons: float = 0.0

    def __post_init__(self):
        validate(self)

    @property
    def two_mode(self) -> bool:
        return self.delta_c2 is not None

    def replace(self, **changes) -> "SystemParams":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


FIELD_NAMES = tuple(f.name for f in dataclasses.fields(SystemParams))
_INT_FIELDS = ("n_atoms", "seed")


def validate(p: SystemParams) -> None:
    for name in FIELD_NAMES:
        value = getattr(p, name)
        if name == "delta_c2" and value is None:
            continue
        if name in _INT_FIELDS:
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise RangeError(f"{name} must be an integer, got {value!r}")
            continue
        if isinstance(value, bool) or not isinstance(value, (int, float, np.floating, np.integer)):
            raise RangeError(f"{name} must be a number, got {value!r}")
        if not math.isfinite(value):
            raise RangeError(f"{name} must be finite, got {value!r}")
    if p.n_atoms < 1:
        raise RangeError("n_atoms must be >= 1")
    if p.seed < 0:
        raise RangeError("seed must be a non-negative integer")
    for name in ("kappa", "waist", "omega_r", "t_final", "avg_window"):
        if getattr(p, name) <= 0:
            raise RangeError(f"{name} must be > 0, got {getattr(p, name)!r}")
    if p.gamma != 1.0:
        raise RangeError("gamma is the rate unit and must equal 1; rescale the inputs")
    if p.omega_pump < 0:
        raise RangeError("omega_pump must be >= 0")
    for name in ("init_pos_halfwidth", "init_mom_halfwidth", "init_photons"):
        if getattr(p, name) < 0:
            raise RangeError(f"{name} must be >= 0")


def from_mapping(doc: Mapping[str, Any]) -> SystemParams:
    """Build validated parameters from a flat mapping (strict: unknown keys fail)."""
    unknown = sorted(set(doc) - set(FIELD_NAMES))
    if unknown:
        raise UnknownKeyError(f"unknown key(s): {', '.join(unknown)}")
    missing = [k for k in REQUIRED_KEYS if k not in doc]
    if missing:
        raise MissingKeyError(f"missing key(s): {', '.join(missing)}")
    values = dict(doc)
    for name in FIELD_NAMES:
        if name in values and name not in _INT_FIELDS and isinstance(values[name], int) \
                and not isinstance(values[name], bool):
            values[name] = float(values[name])
    return SystemParams(**values)


def load_config(text: str) -> SystemParams:
    """Parse a flat TOML document into :class:`SystemParams`.

    Raises
    ------
    ConfigError
        On syntax errors, missing or unknown keys and out-of-range values.
    """
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse configuration: {exc}") from exc
    nested = [k for k, v in doc.items() if isinstance(v, dict)]
    if nested:
        raise ConfigError(f"configuration must be flat, found table(s): {', '.join(nested)}")
    return from_mapping(doc)


def load_config_file(path) -> SystemParams:
    with open(path, "r", encoding="utf-8") as fh:
        return load_config(fh.read())


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def dump_config(p: SystemParams) -> str:
    """Serialize to the flat TOML schema; ``load_config(dump_config(p)) == p``."""
    lines = []
    for name in FIELD_NAMES:
        value = getattr(p, name)
        if value is None:
            continue
        lines.append(f"{name} = {_format_value(value)}")
    return "\n".join(lines) + "\n"


def parse_override(item: str) -> tuple[str, Any]:
    """Split ``key=value`` and decode the value with TOML scalar rules.

    Dotted keys such as ``params.kappa`` resolve to their last component.
    """
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    key, raw = item.split("=", 1)
    key = key.strip().split(".")[-1]
    raw = raw.strip()
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw
    return key, value


def apply_overrides(p: SystemParams, overrides) -> SystemParams:
    """Apply ``key=value`` strings in order (last one wins) and re-validate."""
    doc = p.to_dict()
    if doc["delta_c2"] is None:
        del doc["delta_c2"]
    for item in overrides:
        key, value = parse_override(item)
        if key == "delta_c2" and value in ("none", "None", ""):
            doc.pop("delta_c2", None)
            continue
        doc[key] = value
    return from_mapping(doc)


@dataclass(frozen=True)
class PositionsSnapshot:
    x: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.ndim != 1 or x.shape != y.shape:
            raise ValueError("x and y must be 1-d arrays of equal length")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("positions must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @classmethod
    def uniform(cls, n, x=0.0, y=0.0):
        return cls(np.full(n, float(x)), np.full(n, float(y)))

    def __len__(self):
        return len(self.x)


def _check_size(p, pos):
    if len(pos) != p.n_atoms:
        raise ValueError(f"expected {p.n_atoms} positions, got {len(pos)}")


def effective_detuning(p: SystemParams, pos: PositionsSnapshot) -> float:
    """Atom-shifted cavity detuning ``delta_c - sum_i g(x_i, y_i)^2 / delta_a``.

    Negative values mean the cavity cools.
    """
    _check_size(p, pos)
    if p.delta_a == 0:
        raise SingularityError("effective detuning is singular at delta_a = 0")
    g2 = np.square(coupling(p, pos.x, pos.y))
    return float(p.delta_c - np.sum(g2) / p.delta_a)


def threshold_margin(p: SystemParams, pos: PositionsSnapshot) -> float:
    """Collective scattering strength minus the pumping threshold.

    Returns ``2 sqrt(N) g' Omega/|delta_a| - ((kappa/2)^2 + delta^2)/(2|delta|)``
    with ``g'`` the rms coupling over the ensemble. Positive values predict
    self-organization.
    """
    delta = effective_detuning(p, pos)
    if delta == 0:
        raise SingularityError("threshold undefined at vanishing effective detuning")
    n = len(pos)
    g_rms = math.sqrt(float(np.sum(np.square(coupling(p, pos.x, pos.y)))) / n)
    lhs = 2.0 * math.sqrt(n) * g_rms * p.omega_pump / abs(p.delta_a)
    rhs = ((p.kappa / 2) ** 2 + delta**2) / (2 * abs(delta))
    return lhs - rhs


def zero_detuning_coupling(p: SystemParams, n_eff: float) -> float:
    """Cavity detuning at which the effective detuning vanishes for coupling ``p.g``.

    ``n_eff`` is the number of atoms weighted by their squared mode function,
    so the boundary is ``delta_c* = n_eff g^2 / delta_a``.
    """
    if p.delta_a == 0:
        raise SingularityError("effective detuning is singular at delta_a = 0")
    return n_eff * p.g**2 / p.delta_a


def analytic_threshold_pump(p: SystemParams, pos: PositionsSnapshot) -> float:
    """Pump strength at which :func:`threshold_margin` crosses zero.

    The margin is linear in the pump with slope ``2 sqrt(N) g'/|delta_a|``.
    """
    zero_pump = p.replace(omega_pump=0.0)
    m0 = threshold_margin(zero_pump, pos)
    g_rms = math.sqrt(float(np.mean(np.square(coupling(p, pos.x, pos.y)))))
    slope = 2.0 * math.sqrt(len(pos)) * g_rms / abs(p.delta_a)
    if slope == 0:
        return math.inf
    return -m0 / slope
