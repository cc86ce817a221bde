"""Flat state-vector layouts.

Every dynamical variable lives in one real ``float64`` vector so that generic
integrators can advance it. Complex quantities occupy interleaved
``(re, im)`` pairs. Block order for the second-order model::

    a_mean, sm[N], n_phot, a_sp[N], pop[N], pair[N(N-1)/2], x[N], y[N], px[N], py[N]
    (filter mode) b_mean, n_phot_b, b_sp[N], ab_cross

``pair`` holds <s+_m s-_j> for m < j in row-major order. The mean-field
layout keeps ``a_mean, sm, pop, x, y, px, py``.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Optional

import numpy as np


class StateLayout:
    """Named blocks of a flat real state vector."""

    def __init__(self, blocks):
        # blocks: sequence of (name, length, is_complex)
        self.blocks = []
        self._index = {}
        offset = 0
        for name, length, is_complex in blocks:
            width = 2 * length if is_complex else length
            entry = (name, slice(offset, offset + width), length, is_complex)
            self.blocks.append(entry)
            self._index[name] = entry
            offset += width
        self.size = offset

    def __contains__(self, name):
        return name in self._index

    def slice(self, name) -> slice:
        return self._index[name][1]

    def get(self, vec, name):
        """View of one block; complex blocks are returned as complex arrays."""
        _, sl, _, is_complex = self._index[name]
        block = vec[sl]
        if is_complex:
            return block.view(np.complex128)
        return block

    def set(self, vec, name, value):
        _, sl, length, is_complex = self._index[name]
        if is_complex:
            vec[sl].view(np.complex128)[:] = value
        else:
            vec[sl] = value

    def unpack(self, vec) -> dict:
        vec = np.ascontiguousarray(vec, dtype=float)
        return {name: self.get(vec, name).copy() for name, *_ in self.blocks}

    def pack(self, values: dict) -> np.ndarray:
        out = np.zeros(self.size)
        for name, *_ in self.blocks:
            if name in values and values[name] is not None:
                self.set(out, name, values[name])
        return out

    def column_names(self):
        names = []
        for name, _, length, is_complex in self.blocks:
            scalar = length == 1 and name in _SCALAR_BLOCKS
            for i in range(length):
                base = name if scalar else f"{name}[{i}]"
                if is_complex:
                    names += [f"{base}.re", f"{base}.im"]
                else:
                    names.append(base)
        return names


_SCALAR_BLOCKS = {"a_mean", "n_phot", "b_mean", "n_phot_b", "ab_cross"}


def second_order_layout(n, two_mode=False) -> StateLayout:
    npair = n * (n - 1) // 2
    blocks = [
        ("a_mean", 1, True),
        ("sm", n, True),
        ("n_phot", 1, False),
        ("a_sp", n, True),
        ("pop", n, False),
        ("pair", npair, True),
        ("x", n, False),
        ("y", n, False),
        ("px", n, False),
        ("py", n, False),
    ]
    if two_mode:
        blocks += [
            ("b_mean", 1, True),
            ("n_phot_b", 1, False),
            ("b_sp", n, True),
            ("ab_cross", 1, True),
        ]
    return StateLayout(blocks)


def mean_field_layout(n) -> StateLayout:
    return StateLayout([
        ("a_mean", 1, True),
        ("sm", n, True),
        ("pop", n, False),
        ("x", n, False),
        ("y", n, False),
        ("px", n, False),
        ("py", n, False),
    ])


def _scalar(v):
    v = np.asarray(v)
    return v.reshape(-1)[0] if v.size else v


@dataclass
class CumulantState:
    """Second-order moments plus classical motion, optionally with the filter mode."""

    a_mean: complex
    sm: np.ndarray
    n_phot: float
    a_sp: np.ndarray
    pop: np.ndarray
    pair: np.ndarray
    x: np.ndarray
    y: np.ndarray
    px: np.ndarray
    py: np.ndarray
    b_mean: Optional[complex] = None
    n_phot_b: Optional[float] = None
    b_sp: Optional[np.ndarray] = None
    ab_cross: Optional[complex] = None

    @property
    def n_atoms(self):
        return len(self.x)

    @property
    def two_mode(self):
        return self.b_mean is not None

    @property
    def layout(self):
        return second_order_layout(self.n_atoms, self.two_mode)

    def to_vector(self) -> np.ndarray:
        return self.layout.pack({f.name: getattr(self, f.name) for f in fields(self)})

    @classmethod
    def from_vector(cls, layout, vec):
        d = layout.unpack(vec)
        for name in ("a_mean", "n_phot", "b_mean", "n_phot_b", "ab_cross"):
            if name in d:
                d[name] = _scalar(d[name])
        return cls(**d)

    def pair_matrix(self):
        """Full N x N matrix of <s+_m s-_j>, with populations on the diagonal."""
        return pair_matrix(self.pair, self.n_atoms, self.pop)


@dataclass
class MeanFieldState:
    """First-order moments, populations and classical motion."""

    a_mean: complex
    sm: np.ndarray
    pop: np.ndarray
    x: np.ndarray
    y: np.ndarray
    px: np.ndarray
    py: np.ndarray

    @property
    def n_atoms(self):
        return len(self.x)

    @property
    def layout(self):
        return mean_field_layout(self.n_atoms)

    def to_vector(self) -> np.ndarray:
        return self.layout.pack({f.name: getattr(self, f.name) for f in fields(self)})

    @classmethod
    def from_vector(cls, layout, vec):
        d = layout.unpack(vec)
        d["a_mean"] = _scalar(d["a_mean"])
        return cls(**d)


_TRIU_CACHE = {}


def triu_indices(n):
    if n not in _TRIU_CACHE:
        _TRIU_CACHE[n] = np.triu_indices(n, 1)
    return _TRIU_CACHE[n]


def pair_matrix(pair, n, diagonal=None):
    rows, cols = triu_indices(n)
    mat = np.zeros((n, n), dtype=complex)
    mat[rows, cols] = pair
    mat[cols, rows] = np.conj(pair)
    if diagonal is not None:
        mat[np.diag_indices(n)] = diagonal
    return mat
