"""CSV and manifest writers shared by the CLI and the experiment harness."""
from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np


def fmt(x) -> str:
    """Round-trip float formatting so identical runs give identical bytes."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_rows(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    return path


def write_trajectory(path, times, states):
    """Columns t, i, x_1..x_d; one row per token per recorded time."""
    states = np.asarray(states)
    d = states.shape[-1]
    header = ["t", "i"] + [f"x_{k + 1}" for k in range(d)]
    rows = ([t, i, *X[i]] for t, X in zip(times, states) for i in range(X.shape[0]))
    return write_rows(path, header, rows)


def write_energy(path, times, energies):
    return write_rows(path, ["t", "energy"], zip(times, energies))


def write_masses(path, times, masses):
    """Columns t, k, m_k (long format, k is 1-based)."""
    rows = ([t, k + 1, m[k]] for t, m in zip(times, masses) for k in range(len(m)))
    return write_rows(path, ["t", "k", "m_k"], rows)


def write_cone(path, diag):
    modes = [k + 1 for k in diag.modes]
    header = ["t", "min_c1"] + [c for k in modes for c in (f"R_{k}", f"bound_{k}")]
    rows = (
        [t, m, *[v for pair in zip(R, Bd) for v in pair]]
        for t, m, R, Bd in zip(diag.times, diag.min_c1, diag.ratios, diag.bounds)
    )
    return write_rows(path, header, rows)


def write_threshold(path, curve):
    rows = zip(curve.betas, curve.sigma_bound, curve.is_endpoint)
    return write_rows(path, ["beta", "sigma_bound", "is_endpoint"], rows)


def spec_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def array_hash(a) -> str:
    return hashlib.sha256(np.ascontiguousarray(a, dtype=np.float64).tobytes()).hexdigest()


def write_manifest(path, **fields):
    from . import __version__

    data = {"code_version": __version__, **fields}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    return path
