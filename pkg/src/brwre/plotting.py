"""PNG figures written next to the CLI's CSV output.

Figures are drawn on an off-screen Agg canvas without touching pyplot state,
and saved without the software tag so repeated runs give identical files.
"""

from __future__ import annotations

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

_META = {"Software": None}


def _new(title: str, xlabel: str, ylabel: str):
    fig = Figure(figsize=(6.0, 4.0), dpi=100)
    FigureCanvasAgg(fig)
    ax = fig.add_subplot(1, 1, 1)
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    return fig, ax


def _save(fig: Figure, path: str) -> None:
    fig.tight_layout()
    fig.savefig(path, format="png", metadata=_META)


def plot_simulation(totals: np.ndarray, exact: np.ndarray, path: str) -> None:
    """Empirical mean population per generation against the exact mean."""
    ns = np.arange(totals.shape[1])
    masked = np.where(totals >= 0, totals, np.nan).astype(float)
    fig, ax = _new("Mean population size", "generation n", "mean |eta_n|")
    ax.plot(ns, np.nanmean(masked, axis=0), "o", label="simulated")
    ax.plot(ns, exact, "-", label="exact")
    ax.set_yscale("log")
    ax.legend()
    _save(fig, path)


def plot_anneal(ns, logmoments, path: str) -> None:
    fig, ax = _new("Annealed moment", "n", "log <u_n>")
    ax.plot(ns, logmoments, "o-")
    _save(fig, path)


def plot_fit(ns, r, limit: float | None, path: str) -> None:
    fig, ax = _new("Second-order term", "n", "r_n")
    ax.plot(ns, r, "o-", label="r_n")
    if limit is not None:
        ax.axhline(limit, color="k", ls="--", label="fitted limit")
    ax.legend()
    _save(fig, path)


def plot_restarts(values, traces, path: str) -> None:
    """Objective traces of the local searches, best value marked."""
    fig, ax = _new("Local search traces", "iteration", "objective")
    for t in traces:
        ax.plot(np.arange(len(t)), t, lw=0.8)
    ax.axhline(min(values), color="k", ls="--")
    _save(fig, path)
