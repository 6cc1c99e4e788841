"""CSV plot data.

Moment series: ``t,mean_norm,std_err[,bound]``. Trajectories:
``t,x_0..x_{n-1},v,l,xi,w_0..w_{n-1}``, one row per step plus a final row
holding only the last state. Floats are written with 17 significant digits
so they read back bit-for-bit.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Optional

import numpy as np

from .model import Trajectory
from .sim import MomentSeries


class OutputError(OSError):
    pass


def fmt(x) -> str:
    return format(float(x), ".17g")


def _write(path, header, rows) -> Path:
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc
    return path


def emit_csv(data, path, bound: Optional[np.ndarray] = None) -> Path:
    """Write a ``MomentSeries`` or ``Trajectory`` to ``path``.

    ``bound`` adds a per-step bound column to a moment series.
    """
    if isinstance(data, Trajectory):
        return _emit_trajectory(data, path)
    if not isinstance(data, MomentSeries):
        raise TypeError(f"cannot emit {type(data).__name__} as CSV")
    header = ["t", "mean_norm", "std_err"]
    cols = [data.t, data.mean_norm, data.std_err]
    if bound is not None:
        header.append("bound")
        cols.append(bound)
    rows = ([str(int(t))] + [fmt(c[i]) for c in cols[1:]] for i, t in enumerate(data.t))
    return _write(path, header, rows)


def _emit_trajectory(traj: Trajectory, path) -> Path:
    n = traj.x.shape[1]
    header = (["t"] + [f"x_{i}" for i in range(n)] + ["v", "l", "xi"]
              + [f"w_{i}" for i in range(n)])
    rows = []
    for t in range(traj.horizon):
        rows.append([str(t)] + [fmt(c) for c in traj.x[t]]
                    + [fmt(traj.v[t]), str(int(traj.l[t])), fmt(traj.xi[t])]
                    + [fmt(c) for c in traj.w[t]])
    rows.append([str(traj.horizon)] + [fmt(c) for c in traj.x[-1]] + [""] * (3 + n))
    return _write(path, header, rows)


def _read(path):
    try:
        with Path(path).open(newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise OutputError(f"cannot read {path}: {exc}") from exc
    return rows[0], rows[1:]


def read_moment_csv(path) -> tuple:
    """Returns ``(series, bound_or_None)``."""
    header, rows = _read(path)
    data = np.array([[float(c) for c in r] for r in rows]).reshape(len(rows), len(header))
    t = data[:, 0].astype(np.int64)
    bound = data[:, 3] if "bound" in header else None
    return MomentSeries(t, data[:, 1], data[:, 2], n_runs=0), bound


def read_trajectory_csv(path, seed: int = 0, run_index: int = 0) -> Trajectory:
    header, rows = _read(path)
    n = sum(h.startswith("x_") for h in header)
    x = np.array([[float(c) for c in r[1:1 + n]] for r in rows])
    body = rows[:-1]
    v = np.array([float(r[1 + n]) for r in body])
    l = np.array([int(r[2 + n]) for r in body], dtype=np.int8)
    xi = np.array([float(r[3 + n]) for r in body])
    w = np.array([[float(c) for c in r[4 + n:4 + 2 * n]] for r in body]).reshape(len(body), n)
    return Trajectory(x, v, l, xi, w, seed=seed, run_index=run_index)
