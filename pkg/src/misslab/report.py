"""Report rendering: delimited summaries plus matplotlib figures.

The report path writes a ``report.csv`` next to PNG figures: the graph
layout, a p-value chart for the executed tests, and bar charts of any
recovered distributions.  Everything uses the Agg backend so it works
headless.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Optional, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import networkx as nx

from .estimation import ProbTable
from .graph import MGraph, NodeKind

__all__ = ["draw_mgraph", "plot_pvalues", "plot_table", "write_rows"]

_KIND_COLORS = {
    NodeKind.OBSERVED: "#4c72b0",
    NodeKind.PARTIAL: "#dd8452",
    NodeKind.LATENT: "#c8c8c8",
    NodeKind.MECHANISM: "#55a868",
    NodeKind.PROXY: "#eeeeee",
}


def draw_mgraph(g: MGraph, path, include_proxies: bool = False) -> Path:
    """Render the graph with node kinds color-coded; returns the file path."""
    nodes = [
        n
        for n in sorted(g.kinds)
        if include_proxies or g.kinds[n] is not NodeKind.PROXY
    ]
    gx = nx.DiGraph()
    gx.add_nodes_from(nodes)
    for a, b in sorted(g.directed):
        if a in gx and b in gx:
            gx.add_edge(a, b)
    pos = nx.spring_layout(gx, seed=4)
    fig, ax = plt.subplots(figsize=(6, 4.5))
    colors = [_KIND_COLORS[g.kinds[n]] for n in gx.nodes]
    nx.draw_networkx(gx, pos, ax=ax, node_color=colors, node_size=900, font_size=9, arrows=True)
    for a, b in sorted(g.bidirected):
        if a in pos and b in pos:
            ax.annotate(
                "",
                xy=pos[b],
                xytext=pos[a],
                arrowprops=dict(arrowstyle="<->", linestyle="dashed", color="gray"),
            )
    ax.set_axis_off()
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_pvalues(entries: Sequence[Tuple[str, Optional[float]]], alpha: float, path) -> Path:
    """Horizontal bar chart of test p-values with the rejection level marked."""
    labels = [name for name, _ in entries]
    values = [p if p is not None else 0.0 for _, p in entries]
    fig, ax = plt.subplots(figsize=(7, 0.6 * max(2, len(entries)) + 1))
    bars = ax.barh(range(len(entries)), values, color="#4c72b0")
    for i, (name, p) in enumerate(entries):
        if p is None:
            bars[i].set_color("#c8c8c8")
    ax.axvline(alpha, color="#c44e52", linestyle="--", label=f"alpha = {alpha:g}")
    ax.set_yticks(range(len(entries)))
    ax.set_yticklabels(labels, fontsize=8)
    ax.set_xlabel("p-value")
    ax.set_xlim(0, 1)
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_table(table: ProbTable, path, title: str = "") -> Path:
    """Bar chart over the cells of a (small) probability table."""
    labels = []
    values = []
    for assignment, p in table.cells():
        labels.append(",".join(f"{k}={v}" for k, v in sorted(assignment.items())))
        values.append(p)
    fig, ax = plt.subplots(figsize=(max(4, 0.5 * len(values) + 2), 4))
    ax.bar(range(len(values)), values, color="#55a868")
    ax.set_xticks(range(len(values)))
    ax.set_xticklabels(labels, rotation=60, ha="right", fontsize=7)
    ax.set_ylabel("probability")
    if title:
        ax.set_title(title, fontsize=10)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def write_rows(rows: Iterable[Sequence], path) -> Path:
    """Delimited report body; the first row is taken as the header."""
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        for row in rows:
            writer.writerow(list(row))
    return path
