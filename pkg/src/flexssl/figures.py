"""Figure rendering for the report path; every plot lands next to the CSVs."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def fig_curves(path, series: dict, *, xlabel: str, ylabel: str, title: str = "") -> None:
    """Line plot of one curve per label; series maps label -> (x, y)."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for label, (x, y) in series.items():
        ax.plot(x, y, label=label, linewidth=1.4)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def fig_sweep(path, series: dict, *, xlabel: str, ylabel: str) -> None:
    """Final metric versus axis value with one error-bar line per method."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for label, (values, means, stds) in series.items():
        ax.errorbar(values, means, yerr=stds, label=label, marker="o",
                    capsize=3, linewidth=1.4)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def fig_confidence_hists(path, snapshots, mask, noisy, edges) -> None:
    """Per-snapshot histograms of discriminator confidence split by group."""
    groups = [("observed clean", (mask == 1) & (noisy == 0)),
              ("observed noisy", (mask == 1) & (noisy == 1)),
              ("hidden", mask == 0)]
    groups = [(label, idx) for label, idx in groups if idx.any()]
    n = len(snapshots)
    fig, axes = plt.subplots(1, n, figsize=(3.4 * n, 3.2), squeeze=False)
    for ax, (epoch, p) in zip(axes[0], snapshots):
        for label, idx in groups:
            ax.hist(np.asarray(p)[idx], bins=edges, alpha=0.55, label=label)
        ax.set_title(f"epoch {epoch}")
        ax.set_xlabel("p")
    axes[0][0].set_ylabel("count")
    axes[0][0].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
