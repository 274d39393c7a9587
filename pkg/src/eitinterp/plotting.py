"""Matplotlib renderings for indicator maps and interpolation-error tables.

Figures are returned as PNG bytes so run directories can hash them.
"""
from __future__ import annotations

import io

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.collections import PolyCollection  # noqa: E402
from matplotlib.colors import Normalize  # noqa: E402

from .geometry import PixelPartition  # noqa: E402

TRANSPARENT_BELOW = 0.25
SATURATE_ABOVE = 0.50


def _png(fig) -> bytes:
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=110, metadata={"Software": None})
    plt.close(fig)
    return buf.getvalue()


def indicator_colors(beta: np.ndarray) -> tuple[np.ndarray, Normalize]:
    """Visible-pixel flags and the colour norm for an indicator map.

    Pixels below 25% of the maximum are hidden; the colour scale saturates
    at 50% of the maximum.
    """
    top = float(beta.max()) if beta.size else 0.0
    if top <= 0:
        return np.zeros(beta.shape, dtype=bool), Normalize(0.0, 1.0)
    return beta >= TRANSPARENT_BELOW * top, Normalize(0.0, SATURATE_ABOVE * top, clip=True)


def draw_indicator(ax, partition: PixelPartition, beta: np.ndarray, title: str = "", note: str = "") -> None:
    mesh = partition.mesh
    element_beta = beta[partition.element_pixel]
    visible, norm = indicator_colors(element_beta)
    ax.add_patch(plt.Circle((0, 0), 1.0, fill=False, lw=0.8, color="0.3"))
    if visible.any():
        polys = mesh.nodes[mesh.triangles[visible]]
        coll = PolyCollection(polys, array=element_beta[visible], cmap="viridis", norm=norm, edgecolors="face", linewidths=0.1)
        ax.add_collection(coll)
    if note:
        ax.text(0, 0, note, ha="center", va="center", fontsize=7)
    ax.set_xlim(-1.05, 1.05)
    ax.set_ylim(-1.05, 1.05)
    ax.set_aspect("equal")
    ax.set_xticks([])
    ax.set_yticks([])
    if title:
        ax.set_title(title, fontsize=8)


def render_indicator(partition: PixelPartition, beta: np.ndarray, title: str = "", note: str = "") -> bytes:
    fig, ax = plt.subplots(figsize=(3, 3))
    draw_indicator(ax, partition, beta, title, note)
    return _png(fig)


def render_panels(partition: PixelPartition, panels: list[list[tuple[str, np.ndarray, str]]]) -> bytes:
    """Grid of indicator maps; ``panels[row][col] = (title, beta, note)``."""
    rows, cols = len(panels), max(len(r) for r in panels)
    fig, axes = plt.subplots(rows, cols, figsize=(2.2 * cols, 2.45 * rows), squeeze=False)
    for i, row in enumerate(panels):
        for j in range(cols):
            if j < len(row):
                title, beta, note = row[j]
                draw_indicator(axes[i, j], partition, beta, title, note)
            else:
                axes[i, j].axis("off")
    fig.tight_layout()
    return _png(fig)


def render_error_table(m_values, rows: dict[str, list[float]]) -> bytes:
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    for label, errs in rows.items():
        ax.semilogy(m_values, 100 * np.asarray(errs), marker="o", label=label)
    ax.set_xlabel("electrodes m")
    ax.set_ylabel("relative error [%]")
    ax.set_xticks(list(m_values))
    ax.legend(fontsize=7)
    ax.grid(True, which="both", lw=0.3)
    fig.tight_layout()
    return _png(fig)


def render_columns(series: dict[str, np.ndarray], count: int = 50) -> bytes:
    """First ``count`` column-wise entries of several matrices."""
    fig, ax = plt.subplots(figsize=(6, 3))
    styles = {"true": dict(ls="none", marker="o", mfc="none", color="k")}
    for label, V in series.items():
        y = np.asarray(V).ravel(order="F")[:count]
        ax.plot(np.arange(1, len(y) + 1), y, label=label, **styles.get(label, {}))
    ax.set_xlabel("entry (column-wise)")
    ax.set_ylabel("voltage difference")
    ax.legend(fontsize=7)
    fig.tight_layout()
    return _png(fig)
