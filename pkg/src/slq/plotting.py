"""Static figures written next to the tabular outputs (Agg backend, PNG)."""
from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# no timestamps or version strings, so reruns give identical files
PNG_METADATA = {"Software": None}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=PNG_METADATA)
    plt.close(fig)


def _column(rows, name):
    out = []
    for row in rows:
        v = row.get(name)
        try:
            out.append(float(v))
        except (TypeError, ValueError):
            out.append(math.nan)
    return np.array(out)


def plot_lines(rows, x, ys, path, title=""):
    fig, ax = plt.subplots(figsize=(6, 4))
    xs = _column(rows, x)
    for name in ys:
        ax.plot(xs, _column(rows, name), marker=".", label=name)
    ax.set_xlabel(x)
    ax.set_title(title)
    ax.legend()
    _save(fig, path)


def plot_qhe_sweep(rows, axis, path):
    fig, (top, bottom) = plt.subplots(2, 1, figsize=(6, 6), sharex=True)
    xs = _column(rows, axis)
    top.plot(xs, _column(rows, "rho_xy"), marker=".", label="rho_xy")
    top.plot(xs, _column(rows, "rho_xx"), marker=".", label="rho_xx")
    top.legend()
    ftc = np.array([row.get("ftc") is True for row in rows])
    bottom.step(xs, ftc.astype(float), where="mid")
    bottom.set_ylabel("rational ratio")
    bottom.set_xlabel(axis)
    _save(fig, path)


def plot_phase_diagram(rows, path):
    g = _column(rows, "g")
    beta = _column(rows, "beta")
    omega = _column(rows, "omega")
    fig, ax = plt.subplots(figsize=(6, 4.5))
    sc = ax.scatter(g, beta, c=omega, s=18, cmap="viridis")
    fig.colorbar(sc, ax=ax, label="omega")
    if g.size:
        curve = np.linspace(np.nanmin(g), np.nanmax(g), 200)
        ax.plot(curve, 2 / curve, color="red", label="beta = 2/g")
        ax.set_ylim(np.nanmin(beta), np.nanmax(beta))
        ax.legend()
    ax.set_xlabel("g")
    ax.set_ylabel("beta")
    _save(fig, path)


def plot_trajectories(series: dict, path, ylabel=""):
    """``series`` maps a label to ``(times, values)``."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, (t, v) in series.items():
        ax.plot(t, v, label=label)
    ax.set_xlabel("t")
    ax.set_ylabel(ylabel)
    ax.legend()
    _save(fig, path)
