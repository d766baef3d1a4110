"""Figures: cumulative repaired-level curves and per-tile heat grids."""

from __future__ import annotations

from typing import Optional

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from tilerepair.level import Level, TileKind  # noqa: E402

# stable colours per method so figures from different runs compare directly
METHOD_COLORS = {"SHAP": "tab:blue", "IG": "tab:orange", "UNI": "tab:green"}
_TILE_COLORS = {TileKind.EMPTY: "#f4f4f4", TileKind.SOLID: "#555555",
                TileKind.START: "#2ca02c", TileKind.GOAL: "#d62728"}


def plot_cumulative(series: dict[str, list[tuple[float, int]]], path, title: Optional[str] = None,
                    total: Optional[int] = None) -> None:
    """Step curves of levels repaired within a time budget, log-scaled time axis."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for method, pts in series.items():
        if not pts:
            continue
        t = [p[0] for p in pts]
        k = [p[1] for p in pts]
        ax.step(t, k, where="post", label=method, color=METHOD_COLORS.get(method))
    ax.set_xscale("log")
    ax.set_xlabel("time (s)")
    ax.set_ylabel("levels repaired")
    if total is not None:
        ax.axhline(total, color="0.7", lw=0.8, ls="--")
    if title:
        ax.set_title(title)
    if any(series.values()):
        ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_heat_grid(values: np.ndarray, path, level: Optional[Level] = None,
                   title: Optional[str] = None, cmap: str = "viridis") -> None:
    """Per-cell scalar map; Start and Goal cells are outlined when a level is given."""
    values = np.asarray(values, dtype=np.float64)
    fig, ax = plt.subplots(figsize=(0.4 * values.shape[1] + 1.5, 0.4 * values.shape[0] + 0.8))
    im = ax.imshow(values, cmap=cmap, interpolation="nearest")
    fig.colorbar(im, ax=ax, shrink=0.8)
    if level is not None:
        for kind, colour in ((TileKind.START, "white"), (TileKind.GOAL, "red")):
            r, c = level.start if kind == TileKind.START else level.goal
            ax.add_patch(plt.Rectangle((c - 0.5, r - 0.5), 1, 1, fill=False, ec=colour, lw=2))
    ax.set_xticks([])
    ax.set_yticks([])
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_level(level: Level, path, changed: Optional[list[tuple[int, int]]] = None,
               title: Optional[str] = None) -> None:
    rgb = np.array([[matplotlib.colors.to_rgb(_TILE_COLORS[level[r, c]]) for c in range(level.cols)]
                    for r in range(level.rows)])
    fig, ax = plt.subplots(figsize=(0.4 * level.cols + 0.6, 0.4 * level.rows + 0.6))
    ax.imshow(rgb, interpolation="nearest")
    for r, c in changed or []:
        ax.add_patch(plt.Rectangle((c - 0.5, r - 0.5), 1, 1, fill=False, ec="tab:orange", lw=2))
    ax.set_xticks([])
    ax.set_yticks([])
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
