"""Matplotlib figures written next to the CSV/JSONL outputs."""
from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (6.4, 3.6),
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
}


def read_log(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def plot_learning_curve(log_path, png_path, window: int = 50) -> Path:
    """Episode return (raw and moving average) plus cumulative optimal episodes."""
    records = read_log(log_path)
    png_path = Path(png_path)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        if records:
            ep = np.array([r["episode"] for r in records])
            ret = np.array([r["return"] for r in records])
            ax.plot(ep, ret, lw=0.5, alpha=0.35, color="C0", label="return")
            if len(ret) >= window:
                avg = np.convolve(ret, np.ones(window) / window, mode="valid")
                ax.plot(ep[window - 1:], avg, color="C0", label=f"{window}-episode mean")
            ax2 = ax.twinx()
            ax2.plot(ep, np.cumsum([r["optimal"] for r in records]), color="C3", label="optimal episodes")
            ax2.set_ylabel("cumulative optimal episodes")
            ax2.grid(False)
        ax.set_xlabel("episode")
        ax.set_ylabel("episode return")
        ax.legend(loc="lower right", frameon=False)
        fig.savefig(png_path)
        plt.close(fig)
    return png_path


def plot_oracle(rows: list[dict], png_path, title: str = "") -> Path:
    png_path = Path(png_path)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(max(6.4, 0.25 * len(rows)), 3.6))
        colors = ["C2" if r["spec_met"] else "C7" for r in rows]
        ax.bar(range(len(rows)), [r["reward"] for r in rows], color=colors)
        ax.set_xticks(range(len(rows)))
        ax.set_xticklabels([r["signature"] for r in rows], rotation=90)
        ax.set_ylabel("reward")
        if title:
            ax.set_title(title)
        fig.savefig(png_path)
        plt.close(fig)
    return png_path


def plot_first_optimal(rows: list[dict], png_path) -> Path:
    """Strip plot of first-optimal episode per run, one column per agent/scenario."""
    png_path = Path(png_path)
    groups: dict[str, list] = {}
    for r in rows:
        groups.setdefault(f"{r['agent']} s{r['scenario']}", []).append(r["first_opt_episode"])
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for i, (label, vals) in enumerate(groups.items()):
            found = [v for v in vals if v not in (None, "")]
            ax.scatter([i] * len(found), found, s=14, color="C0")
            ax.text(i, 0, f"{len(found)}/{len(vals)}", ha="center", va="bottom", fontsize=7)
        ax.set_xticks(range(len(groups)))
        ax.set_xticklabels(list(groups))
        ax.set_ylabel("first optimal episode")
        fig.savefig(png_path)
        plt.close(fig)
    return png_path
