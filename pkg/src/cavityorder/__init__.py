"""Semiclassical cumulant simulations of transversely driven atoms in an optical cavity."""

__version__ = "0.1.0"

from .params import SystemParams, load_config, load_config_file  # noqa: F401
