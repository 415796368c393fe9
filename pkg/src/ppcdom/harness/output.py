"""CSV time series and JSON summaries."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from ..plant import CONFIG_DIM
from .runner import BabbleLog, RunLog


def csv_header(n_channels):
    cols = ["t"]
    for name in ("e", "xi", "phi_a", "phi_b"):
        cols += [f"{name}_{i + 1}" for i in range(n_channels)]
    cols += [f"u_{j + 1}" for j in range(CONFIG_DIM)]
    return cols + ["norm_e", "V1", "violations"]


def _fmt(x):
    return format(float(x), ".17g")


def write_csv(log: RunLog, path):
    """One row per logged step; floats carry 17 significant digits so they round-trip."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(csv_header(log.n_channels))
        for k in range(len(log)):
            rec = log.records[k]
            row = [_fmt(log.t[k])]
            for arr in (log.e, log.xi, log.phi_a, log.phi_b, log.u):
                row += [_fmt(v) for v in arr[k]]
            row += [_fmt(log.norm_e[k]), _fmt(rec.v1), str(rec.violations)]
            w.writerow(row)
    return path


def read_csv(path) -> dict:
    """Column name -> float array."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    data = np.array(body, dtype=float).reshape(len(body), len(header))
    return {name: data[:, i] for i, name in enumerate(header)}


def write_babble(log: BabbleLog, path):
    n_x = log.inputs.shape[1]
    n_p = log.velocities.shape[1]
    header = ([f"x_{i + 1}" for i in range(n_x)] + [f"u_{j + 1}" for j in range(CONFIG_DIM)]
              + [f"pdot_{i + 1}" for i in range(n_p)])
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for x, u, v in zip(log.inputs, log.controls, log.velocities):
            w.writerow([_fmt(a) for a in np.concatenate([x, u, v])])
    return path


def read_babble(path) -> BabbleLog:
    cols = read_csv(path)
    names = list(cols)
    x = np.column_stack([cols[c] for c in names if c.startswith("x_")])
    u = np.column_stack([cols[c] for c in names if c.startswith("u_")])
    v = np.column_stack([cols[c] for c in names if c.startswith("pdot_")])
    if u.shape[1] != CONFIG_DIM or x.shape[1] != CONFIG_DIM + v.shape[1]:
        raise ValueError(f"{path}: babbling columns do not match 12 controls and 3n features")
    return BabbleLog(x, u, v)


def write_summary(summary, path):
    data = summary.to_dict() if hasattr(summary, "to_dict") else summary
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    return path


def result_dict(result) -> dict:
    return {
        "method": result.method, "seed": result.seed, "success": bool(result.success),
        "steady_state_error": result.steady_state_error,
        "convergence_time": result.convergence_time,
        "stage_convergence_times": list(result.stage_times),
        "final_error": result.final_error,
        "violation_count": result.violation_count, "failure": result.failure,
        "steps": len(result.log),
    }
