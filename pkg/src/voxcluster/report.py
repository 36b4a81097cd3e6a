"""Figure rendering for the CLI report path.

Renders the 1D summary plots (intensity histogram with its markers,
cluster size vs rank) to image files next to the delimited exports.
The core analysis modules stay plot-free; only the CLI calls in here.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .features import ClusterTable
from .stats import IntensityStats


def render_histogram(stats: IntensityStats, path: str | Path, title: str = "Intensity histogram") -> None:
    """Occupied-bin counts vs intensity, with VMEAN/VMEDIAN/HMAX markers."""
    hist = stats.histogram
    occupied = np.flatnonzero(hist.counts)
    w = hist.bin_width
    centers = hist.lo + (occupied + 0.5) * w
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.plot(centers, hist.counts[occupied], drawstyle="steps-mid", lw=0.8, color="k")
    ax.axvline(stats.vmean, color="red", lw=1.2, label=f"VMEAN = {stats.vmean:.6g}")
    ax.axvline(stats.vmedian, color="blue", lw=1.2, label=f"VMEDIAN = {stats.vmedian:.6g}")
    ax.axvline(stats.hmax, color="green", lw=1.2, ls="--", label=f"HMAX = {stats.hmax:.6g}")
    ax.set_yscale("log")
    ax.set_xlabel("intensity")
    ax.set_ylabel("count")
    ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_size_rank(table: ClusterTable, path: str | Path, breaks: list[int] | None = None) -> None:
    """Cluster size against rank on log-log axes, with group break markers."""
    sizes = table.sizes()
    ranks = np.arange(1, sizes.size + 1)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.loglog(ranks, sizes, ".", ms=3, color="k")
    for b in breaks or []:
        ax.axvline(b + 0.5, color="orange", lw=1.0, ls=":")
    ax.set_xlabel("cluster rank")
    ax.set_ylabel("cluster size (voxels)")
    ax.set_title("Cluster size by rank")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
