"""CSV / JSON persistence with exact float round-tripping."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

TRACE_COLUMNS = ("E", "E_tilde", "Y", "V", "mu_sq", "Lambda", "B", "f_tilde", "G", "residual")

SCHEMA = {
    "trajectory": {
        "file": "trajectories/path_XXXX.csv",
        "columns": {
            "t": "time",
            "beta_i": "velocity coefficient of mode i (homogeneous part u)",
            "chi_i": "phase coefficient of mode i",
        },
    },
    "energy": {
        "file": "energy/path_XXXX.csv",
        "columns": {
            "t": "time",
            "E": "|u|^2 + |grad phi|^2 + int F(phi)",
            "E_tilde": "|u|^2 + |grad phi|^2 + 2 int F(phi)",
            "Y": "||(u, phi)||_Y^2",
            "V": "||(u, phi)||_V^2",
            "mu_sq": "|mu|^2",
            "Lambda": "||(a, b)||^2 + 1",
            "B": "||(a, b)||^4 + 1",
            "f_tilde": "|a|^2 ||a||^2 + Lambda",
            "G": "energy weight exp(-C0 t - C0 int f_tilde)",
            "residual": "Ito energy-balance residual",
        },
    },
    "sequence": {
        "file": "sequence.csv",
        "columns": {"k": "evaluation index", "J": "cost estimate", "best_J": "best so far",
                    "admissible": "1 if the admissibility bound holds", "margin": "log(delta) - exponent",
                    "p_i": "control parameter i"},
    },
    "energy_mean": {
        "file": "energy_mean.csv",
        "columns": {"t": "time", "<col>": "ensemble mean of the energy column"},
    },
}


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(fmt(v) for v in r) + "\n")
    return path


def write_trajectory_csv(path, t, beta, chi) -> Path:
    nu, nphi = beta.shape[1], chi.shape[1]
    header = ["t"] + [f"beta_{i}" for i in range(nu)] + [f"chi_{i}" for i in range(nphi)]
    rows = np.column_stack([t, beta, chi])
    return write_csv(path, header, rows)


def read_trajectory_csv(path, basis=None):
    """Return (t, beta, chi) from a trajectory CSV."""
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    nb = sum(h.startswith("beta_") for h in header)
    nc = sum(h.startswith("chi_") for h in header)
    if basis is not None and (nb != basis.nu or nc != basis.nphi):
        raise ValueError(f"{path}: coefficient blocks do not match the basis")
    return data[:, 0], data[:, 1:1 + nb], data[:, 1 + nb:1 + nb + nc]


def write_energy_csv(path, trace) -> Path:
    cols = [trace.t] + [getattr(trace, c) for c in TRACE_COLUMNS]
    return write_csv(path, ("t",) + TRACE_COLUMNS, np.column_stack(cols))


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if hasattr(o, "to_dict"):
        return o.to_dict()
    raise TypeError(f"not serializable: {type(o)}")


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_default) + "\n")
    return path


def write_schema(outdir) -> Path:
    return write_json(Path(outdir) / "schema.json", SCHEMA)
