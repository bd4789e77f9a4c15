"""Report rendering: delimited tables, JSON payloads, and board figures.

Every CLI command writes its numbers as CSV + JSON and, when asked, renders
matplotlib figures (PNG) next to them: confidence ellipses on a board
backdrop for fit reports, win-probability overlays for heat-maps.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Sequence

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
from matplotlib import cm, colors, patches

from . import board, emfit
from .board import BoardSpec, DEFAULT_BOARD


def write_csv(path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def write_json(path, payload) -> None:
    Path(path).write_text(json.dumps(payload, indent=2))


def format_table(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    """Plain-text table with right-aligned numeric columns."""
    cells = [[("" if v is None else f"{v:.1f}" if isinstance(v, float) else str(v))
              for v in row] for row in rows]
    widths = [max(len(h), *(len(r[i]) for r in cells)) if cells else len(h)
              for i, h in enumerate(header)]
    lines = ["  ".join(h.rjust(w) for h, w in zip(header, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for row in cells:
        lines.append("  ".join(c.rjust(w) for c, w in zip(row, widths)))
    return "\n".join(lines) + "\n"


def draw_board(ax, spec: BoardSpec = DEFAULT_BOARD, *, lw: float = 0.6,
               color: str = "0.35", numbers: bool = True) -> None:
    """Wire-frame dartboard backdrop."""
    for r in (spec.r_db, spec.r_sb, spec.r_treble_inner, spec.r_treble_outer,
              spec.r_double_inner, spec.r_double_outer):
        ax.add_patch(patches.Circle((0, 0), r, fill=False, lw=lw, color=color))
    for k in range(20):
        th = math.radians(99.0 - 18.0 * k)
        ax.plot([spec.r_sb * math.cos(th), spec.r_double_outer * math.cos(th)],
                [spec.r_sb * math.sin(th), spec.r_double_outer * math.sin(th)],
                lw=lw, color=color)
    if numbers:
        for num in spec.segment_order:
            th = spec.segment_center_angle(num)
            r = spec.r_double_outer + 12
            ax.text(r * math.cos(th), r * math.sin(th), str(num),
                    ha="center", va="center", fontsize=7, color=color)
    ax.set_aspect("equal")
    ax.set_xlim(-195, 195)
    ax.set_ylim(-195, 195)
    ax.set_xlabel("mm")
    ax.set_ylabel("mm")


def ellipse_figure(entries: Sequence[dict], target: str, path,
                   spec: BoardSpec = DEFAULT_BOARD, level: float = 0.95) -> None:
    """Confidence ellipses for several fitted models of one target region.

    entries: [{player, model, mode}]; unbiased models drawn blue,
    inferred-mean red, matching the usual convention.
    """
    ncols = min(4, max(1, len({e["player"] for e in entries})))
    players = sorted({e["player"] for e in entries})
    nrows = math.ceil(len(players) / ncols)
    fig, axes = plt.subplots(nrows, ncols, figsize=(3.2 * ncols, 3.2 * nrows),
                             squeeze=False)
    center = np.array(board.region_center(target, spec))
    for ax in axes.ravel():
        ax.axis("off")
    for ax, player in zip(axes.ravel(), players):
        ax.axis("on")
        draw_board(ax, spec, numbers=False)
        half = 60.0
        ax.set_xlim(center[0] - half, center[0] + half)
        ax.set_ylim(center[1] - half, center[1] + half)
        ax.set_title(player, fontsize=9)
        for e in entries:
            if e["player"] != player:
                continue
            model: emfit.GaussianSkill = e["model"]
            mu, semi, angle = emfit.confidence_ellipse(model, level)
            color = "tab:blue" if e.get("mode") == emfit.UNBIASED else "tab:red"
            ax.add_patch(patches.Ellipse(center + mu, 2 * semi[0], 2 * semi[1],
                                         angle=math.degrees(angle), fill=False,
                                         color=color, lw=1.2))
            ax.plot(*(center + mu), "+", color=color, ms=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def heatmap_figure(aims: np.ndarray, values: np.ndarray, path,
                   spec: BoardSpec = DEFAULT_BOARD, best: int | None = None,
                   probe: np.ndarray | None = None, title: str = "") -> None:
    """Win-probability overlay on the board; optimal aim marked with '+'."""
    fig, ax = plt.subplots(figsize=(7.2, 7.2))
    finite = np.isfinite(values)
    norm = colors.Normalize(vmin=values[finite].min(), vmax=values[finite].max())
    ax.scatter(aims[:, 0], aims[:, 1], c=values, s=4, cmap=cm.viridis, norm=norm,
               marker="s", linewidths=0)
    draw_board(ax, spec)
    if best is not None:
        ax.plot(aims[best, 0], aims[best, 1], "+", color="lime", ms=16, mew=3)
    if probe is not None:
        ax.plot(probe[0], probe[1], "x", color="deepskyblue", ms=14, mew=3)
    fig.colorbar(cm.ScalarMappable(norm=norm, cmap=cm.viridis), ax=ax,
                 fraction=0.046, label="win probability")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
