"""Matplotlib figures written next to the report tables."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from .aggregation import HeatmapGrid  # noqa: E402
from .semantic_map import SemanticMap  # noqa: E402

_META = {"Software": None}


def _outline(ax, smap: SemanticMap):
    for r in smap.regions:
        p = np.vstack([r.polygon, r.polygon[:1]])
        ax.plot(p[:, 0], p[:, 1], color="0.6", lw=0.4)


def plot_heatmap(grid: HeatmapGrid, smap: SemanticMap, title: str, path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 5))
    r = grid.resolution
    extent = (grid.x[0] - r / 2, grid.x[-1] + r / 2, grid.y[0] - r / 2, grid.y[-1] + r / 2)
    im = ax.imshow(np.ma.masked_equal(grid.values, 0.0), origin="lower", extent=extent, cmap="magma_r")
    _outline(ax, smap)
    fig.colorbar(im, ax=ax, label="score per cell")
    ax.set_title(title)
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_aspect("equal")
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata=_META)
    plt.close(fig)
    return Path(path)


def plot_top_tracks(tracks: pd.DataFrame, path, k: int = 15) -> Path:
    """Horizontal bars of the k most relevant tracks, split into the three scores."""
    top = tracks.sort_values(["relevance", "track"], ascending=[False, True], kind="stable").head(k)
    fig, axes = plt.subplots(1, 3, figsize=(10, 0.3 * max(len(top), 4) + 1.2), sharey=True)
    labels = [f"{t} ({c})" for t, c in zip(top["track"], top["class"])]
    y = np.arange(len(top))[::-1]
    for ax, col in zip(axes, ("interaction", "anomaly", "relevance")):
        ax.barh(y, top[col].to_numpy(), color="tab:blue" if col != "anomaly" else "tab:orange")
        ax.set_title(col)
    axes[0].set_yticks(y)
    axes[0].set_yticklabels(labels, fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata=_META)
    plt.close(fig)
    return Path(path)


def plot_comparison(table: pd.DataFrame, path) -> Path:
    """Grouped bars of dataset scores per recording (raw and per track)."""
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    x = np.arange(len(table))
    w = 0.25
    for ax, suffix in zip(axes, ("", "_per_track")):
        for i, col in enumerate(("interaction", "anomaly", "relevance")):
            ax.bar(x + (i - 1) * w, table[col + suffix].to_numpy(), w, label=col)
        ax.set_xticks(x)
        ax.set_xticklabels(table["recording_id"].astype(str), rotation=45, ha="right", fontsize=8)
        ax.set_yscale("symlog")
        ax.set_title("dataset scores" + (" per track" if suffix else ""))
    axes[0].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata=_META)
    plt.close(fig)
    return Path(path)
