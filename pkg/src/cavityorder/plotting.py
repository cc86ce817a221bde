"""Quick-look figures written next to the CSV outputs (Agg backend, PNG)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .observables import capped_energy  # noqa: E402

LABELS = {
    "abs_theta": r"$|\Theta|$",
    "theta": r"$\Theta$",
    "n_phot": r"$\langle a^\dagger a\rangle$",
    "e_kin": r"$E_{kin}$ [$\hbar\omega_r$]",
    "inversion": r"$\langle\sigma_z\rangle$",
    "n_phot_b": r"$\langle b^\dagger b\rangle$",
    "delta_eff": r"$\delta$ [$\Gamma$]",
    "threshold_margin": "threshold margin",
    "delta_c": r"$\Delta_c$ [$\Gamma$]",
    "omega_pump": r"$\Omega$ [$\Gamma$]",
    "g": r"$g$ [$\Gamma$]",
}


def plot_trajectory(path, times, observables) -> Path:
    names = [n for n in ("abs_theta", "n_phot", "e_kin", "inversion", "n_phot_b")
             if n in observables]
    fig, axes = plt.subplots(len(names), 1, sharex=True, figsize=(6, 1.8 * len(names)))
    axes = np.atleast_1d(axes)
    for ax, name in zip(axes, names):
        ax.plot(times, observables[name], lw=0.8)
        ax.set_ylabel(LABELS.get(name, name))
    axes[-1].set_xlabel(r"$t$ [$1/\Gamma$]")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_scan(path, grid, names=("abs_theta", "n_phot", "e_kin")) -> Path:
    a1, a2 = grid.spec.axis1, grid.spec.axis2
    fig, axes = plt.subplots(1, len(names), figsize=(4.2 * len(names), 3.6))
    axes = np.atleast_1d(axes)
    for ax, name in zip(axes, names):
        data = grid.field(name)
        if name == "e_kin":
            data = capped_energy(data)
        # rows follow axis2 so axis1 runs horizontally
        mesh = ax.pcolormesh(a1.values, a2.values, data.T, shading="nearest")
        fig.colorbar(mesh, ax=ax, label=LABELS.get(name, name))
        delta = grid.field("delta_eff")
        if np.isfinite(delta).any() and np.nanmin(delta) < 0 < np.nanmax(delta):
            ax.contour(a1.values, a2.values, delta.T, levels=[0.0], colors="w",
                       linestyles="--", linewidths=1)
        ax.set_xlabel(LABELS.get(a1.name, a1.name))
        ax.set_ylabel(LABELS.get(a2.name, a2.name))
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_spectrum(path, spectrum, features=(), xlim=None) -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(spectrum.omega, spectrum.s, lw=0.8)
    for f in features:
        ax.axvline(f.position, color="r" if f.kind == "dip" else "g", lw=0.5, alpha=0.6)
    ax.set_xlabel(r"$\omega$ [$\Gamma$]")
    ax.set_ylabel(r"$S(\omega)$" + (" (normalized)" if spectrum.normalized else ""))
    if xlim is not None:
        ax.set_xlim(*xlim)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)
