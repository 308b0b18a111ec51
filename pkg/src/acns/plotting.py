"""PNG figures for run reports (non-interactive backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_energy(trace, path) -> Path:
    """Modified energy per path and the Ito-balance residual."""
    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(9, 3.5))
    for row in np.atleast_2d(trace.E_tilde):
        ax0.plot(trace.t, row, lw=0.8, alpha=0.6)
    ax0.set_xlabel("t")
    ax0.set_ylabel("modified energy")
    for row in np.atleast_2d(trace.residual):
        ax1.plot(trace.t, row, lw=0.8, alpha=0.6)
    ax1.set_xlabel("t")
    ax1.set_ylabel("balance residual")
    return _save(fig, path)


def plot_weights(trace, path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(trace.t, np.atleast_2d(trace.G)[0], label="G")
    ax.plot(trace.t, np.atleast_2d(trace.Lambda)[0], label="Lambda")
    ax.set_yscale("log")
    ax.set_xlabel("t")
    ax.legend()
    return _save(fig, path)


def plot_sequence(record, path) -> Path:
    k = [r["k"] for r in record]
    J = [r["J"] for r in record]
    best = [r["best_J"] for r in record]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(k, J, ".", ms=3, label="candidate")
    ax.plot(k, best, "-", label="best so far")
    ax.set_xlabel("evaluation")
    ax.set_ylabel("J")
    ax.set_yscale("log")
    ax.legend()
    return _save(fig, path)


def plot_audit(reports, path) -> Path:
    names = [r.name for r in reports]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    x = np.arange(len(names))
    ax.bar(x - 0.2, [r.max_ratio for r in reports], 0.4, label="base grid")
    ax.bar(x + 0.2, [r.fine_max_ratio for r in reports], 0.4, label="doubled grid")
    ax.set_xticks(x, names, rotation=20)
    ax.set_ylabel("max ratio")
    ax.legend()
    return _save(fig, path)


def plot_phase(geom, phi, path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 2.5))
    X, Y = np.meshgrid(geom.x, geom.y)
    m = ax.contourf(X, Y, phi, levels=21, cmap="RdBu_r")
    fig.colorbar(m, ax=ax)
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    return _save(fig, path)
