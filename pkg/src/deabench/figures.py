"""Matplotlib rendering of batch heatmaps and per-firm spider charts.

Only the CLI report path draws figures; the library and service stay
headless and emit data payloads.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def render_heatmap(heatmap: dict, path: str, title: str = "") -> str:
    """Draw the firms-by-features change grid; empty rows stay blank."""
    firms = heatmap["firms"]
    features = heatmap["features"]
    mat = np.asarray(heatmap["changed"], dtype=float)
    height = max(2.0, 0.18 * len(firms) + 1.2)
    fig, ax = plt.subplots(figsize=(1.0 + 0.9 * len(features), height))
    ax.imshow(mat, aspect="auto", cmap="Greys", vmin=0.0, vmax=1.0)
    ax.set_xticks(range(len(features)), labels=features, rotation=30, ha="right")
    step = max(1, len(firms) // 40)
    ax.set_yticks(range(0, len(firms), step),
                  labels=[firms[i] for i in range(0, len(firms), step)], fontsize=6)
    ax.set_xlabel("feature")
    ax.set_ylabel("firm")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_spider(payload: dict, path: str, title: str = "") -> str:
    """Overlay one polygon per cost configuration; the unit ring marks the
    original plan."""
    axes = payload["axes"]
    n = len(axes)
    angles = [2 * math.pi * i / n for i in range(n)]
    angles_closed = angles + angles[:1]
    fig, ax = plt.subplots(figsize=(6, 6), subplot_kw={"projection": "polar"})
    ring = [1.0] * (n + 1)
    ax.plot(angles_closed, ring, "k--", linewidth=1.0, label="original")
    for label, ratios in payload["series"].items():
        vals = list(ratios) + [ratios[0]]
        ax.plot(angles_closed, vals, linewidth=1.4, label=label)
        ax.fill(angles_closed, vals, alpha=0.08)
    ax.set_xticks(angles, labels=axes)
    upper = max(1.05, max((max(r) for r in payload["series"].values()), default=1.0) * 1.1)
    ax.set_ylim(0.0, upper)
    ax.set_title(title or f"firm {payload['firm']}")
    ax.legend(loc="upper right", bbox_to_anchor=(1.25, 1.1), fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
