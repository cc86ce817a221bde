"""CSV and metadata writers shared by the command line tools.

Floats are written with 17 significant digits so that files round-trip
exactly and identical runs give byte-identical outputs.
"""

from __future__ import annotations

import csv
import json
import math
import platform
from pathlib import Path

import numpy as np

from . import __version__

FLOAT_FMT = "%.17g"
METADATA_NAME = "metadata.json"


class OutputExistsError(FileExistsError):
    pass


def _fmt(value):
    if isinstance(value, (float, np.floating)):
        return FLOAT_FMT % float(value)
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return str(value)


def prepare_output_dir(path, force=False, names=()) -> Path:
    """Create ``path`` if needed and refuse to overwrite ``names`` unless ``force``."""
    path = Path(path)
    if path.exists() and not path.is_dir():
        raise OutputExistsError(f"{path} exists and is not a directory")
    clashes = [n for n in names if (path / n).exists()]
    if clashes and not force:
        raise OutputExistsError(
            f"{path} already holds {', '.join(sorted(clashes))}; pass --force to overwrite")
    path.mkdir(parents=True, exist_ok=True)
    return path


def write_table(path, columns, rows) -> Path:
    """Write ``rows`` (iterables aligned with ``columns``) as CSV."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def read_table(path):
    """Read a CSV written by :func:`write_table` into a dict of columns.

    Numeric columns become float arrays; others stay lists of strings.
    """
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = list(reader)
    out = {}
    for k, name in enumerate(header):
        col = [r[k] for r in data]
        try:
            out[name] = np.array([float(v) for v in col])
        except ValueError:
            out[name] = col
    return out


def write_trajectory_csv(path, model, tr) -> Path:
    """Time, the full state vector and the observables, one row per sample."""
    obs_names = list(tr.observables)
    columns = ["t"] + model.layout.column_names() + obs_names + ["violation"]
    obs = [np.asarray(tr.observables[n]) for n in obs_names]

    def rows():
        for k, t in enumerate(tr.times):
            yield [float(t), *tr.samples[k].tolist(), *(float(o[k]) for o in obs),
                   float(tr.violations[k])]

    return write_table(path, columns, rows())


def write_scan_csv(path, grid) -> Path:
    records = list(grid.rows())
    columns = list(records[0]) if records else []
    return write_table(path, columns, ([r[c] for c in columns] for r in records))


def write_spectrum_csv(path, spectrum) -> Path:
    rows = zip(spectrum.omega.tolist(), spectrum.s.tolist(), spectrum.s_raw.tolist())
    return write_table(path, ["omega", "s_normalized", "s_raw"], rows)


def write_correlation_csv(path, corr) -> Path:
    rows = zip(corr.tau.tolist(), corr.g1.real.tolist(), corr.g1.imag.tolist())
    return write_table(path, ["tau", "g1_re", "g1_im"], rows)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path, payload) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")
    return path


def metadata(command, params=None, settings=None, args=None, **extra) -> dict:
    """Self-describing provenance record for an output directory."""
    meta = {
        "package": "cavityorder",
        "version": __version__,
        "command": command,
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
    if params is not None:
        meta["params"] = params.to_dict()
    if settings is not None:
        meta["integrator"] = settings.to_dict()
    if args is not None:
        meta["args"] = args
    meta.update(extra)
    return meta
