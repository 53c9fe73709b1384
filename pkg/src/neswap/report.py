"""Render sweep output to figures: risk-utility scatter with frontier overlay.

The CSV stays the primary artifact; these renderings are for eyeballing the
trade-off per population size without spreadsheet work.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .riskutility import frontier, save_points_csv  # noqa: E402


def render_sweep_figures(points, out_dir, stem="sweep"):
    """One PNG per population size N: per-J trajectories (DU vs DR), the
    pooled frontier dashed on top. Also writes <stem>_frontier.csv with the
    per-N frontier points. Returns the list of files written."""
    if not points:
        raise ValueError("no points to render")
    os.makedirs(out_dir, exist_ok=True)
    written = []
    frontier_rows = []
    for N in sorted({p.N for p in points}):
        group = [p for p in points if p.N == N]
        fig, ax = plt.subplots(figsize=(7.0, 5.0))
        for J in sorted({p.J for p in group}):
            traj = sorted((p for p in group if p.J == J), key=lambda p: p.swap_count)
            ax.plot([p.DU for p in traj], [p.DR for p in traj],
                    marker="o", markersize=3, linewidth=1, alpha=0.8,
                    label="+".join(J))
        front = sorted(frontier(group), key=lambda p: p.DU)
        frontier_rows.extend(front)
        ax.plot([p.DU for p in front], [p.DR for p in front],
                linestyle="--", color="black", linewidth=1.5, label="frontier")
        ax.set_xlabel("data utility DU")
        ax.set_ylabel("data risk DR")
        ax.set_title(f"Risk-utility trade-off, N = {N:g}")
        ax.legend(fontsize=8)
        ax.grid(True, alpha=0.3)
        path = os.path.join(out_dir, f"{stem}_N{N:g}.png")
        fig.savefig(path, dpi=150, bbox_inches="tight")
        plt.close(fig)
        written.append(path)
    fcsv = os.path.join(out_dir, f"{stem}_frontier.csv")
    save_points_csv(frontier_rows, fcsv)
    written.append(fcsv)
    return written


def render_trace_figure(trace, out_path):
    """Log-likelihood trace of a mixture fit; one line, iteration on x."""
    if len(trace) == 0:
        raise ValueError("empty trace")
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(range(len(trace)), trace, marker=".", linewidth=1)
    ax.set_xlabel("EM iteration")
    ax.set_ylabel("log-likelihood")
    ax.grid(True, alpha=0.3)
    fig.savefig(out_path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return out_path
