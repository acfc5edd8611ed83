"""Figure rendering for the command line reports.  File output only."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def plot_dos(path, centers, curves: dict, title: str = "", stderr: dict | None = None):
    """Overlay density curves; `curves` maps legend labels to value arrays."""
    fig, ax = plt.subplots(figsize=(8, 4.5))
    for label, values in curves.items():
        ax.plot(centers, values, label=label, lw=1.2)
        if stderr and label in stderr:
            ax.fill_between(
                centers, values - stderr[label], values + stderr[label], alpha=0.25, lw=0
            )
    ax.set_xlabel("E")
    ax.set_ylabel("density of states")
    if title:
        ax.set_title(title)
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_levels(path, energies, title: str = ""):
    fig, ax = plt.subplots(figsize=(8, 3))
    ax.vlines(energies, 0, 1, lw=0.6)
    ax.set_xlabel("E")
    ax.set_yticks([])
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_time_spectrum(path, ts, amp, marks=None, title: str = ""):
    fig, ax = plt.subplots(figsize=(8, 4.5))
    ax.plot(ts, amp, lw=1.0)
    if marks is not None:
        for t in marks:
            ax.axvline(t, color="tab:red", lw=0.8, ls="--", alpha=0.7)
    ax.set_xlabel("t")
    ax.set_ylabel("|C(t)|")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_trajectory(path, ts, psis, title: str = ""):
    """Per-mode occupations and phases along a mean-field trajectory."""
    psis = np.asarray(psis)
    fig, axes = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    for l in range(psis.shape[1]):
        axes[0].plot(ts, np.abs(psis[:, l]) ** 2, lw=1.0, label=f"mode {l + 1}")
        axes[1].plot(ts, np.angle(psis[:, l]), lw=0.8)
    axes[0].set_ylabel("|psi|^2")
    axes[1].set_ylabel("arg psi")
    axes[1].set_xlabel("t")
    axes[0].legend(frameon=False, fontsize=8)
    if title:
        axes[0].set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
