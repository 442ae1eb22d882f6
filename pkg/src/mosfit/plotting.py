"""Figures for extraction reports, rendered off-screen."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["plot_convergence", "plot_overlay"]


def plot_convergence(reports: dict, path) -> None:
    """Cost against elapsed time, one line per labelled report."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for label, rep in reports.items():
        t = [r["elapsed"] for r in rep.iterations]
        e = [r["cost"] for r in rep.iterations]
        ax.plot(t, e, marker=".", ms=3, label=label)
    ax.set_yscale("log")
    ax.set_xlabel("elapsed time (s)")
    ax.set_ylabel("cost")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_overlay(dataset, simulated, path) -> None:
    """Measured points and simulated lines of one characteristic."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    sim = np.asarray(simulated, dtype=float)
    if dataset.kind == "IV":
        for vg in np.unique(dataset.vgs):
            sel = dataset.vgs == vg
            order = np.argsort(dataset.vds[sel])
            x = dataset.vds[sel][order]
            line, = ax.plot(x, sim[sel][order], lw=1)
            ax.plot(x, dataset.values[sel][order], "o", ms=3, mfc="none",
                    color=line.get_color(), label=f"Vgs={vg:g} V")
        ax.set_xlabel("Vds (V)")
        ax.set_ylabel("Id (A)")
        ax.legend(fontsize=7)
    else:
        x, xl = {"Cds": (dataset.vds, "Vds (V)"), "Cgd": (dataset.vgd, "Vgd (V)"),
                 "Cgs": (dataset.vgs, "Vgs (V)")}[dataset.kind]
        order = np.argsort(x)
        ax.plot(x[order], dataset.values[order], "o", ms=2, mfc="none", label="measured")
        ax.plot(x[order], sim[order], lw=1, label="model")
        ax.set_xlabel(xl)
        ax.set_ylabel(f"{dataset.kind} (F)")
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
