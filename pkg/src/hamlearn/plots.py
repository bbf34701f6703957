"""Figure rendering for the CLI report paths.

Every report-producing command writes its delimited output first and then,
unless asked not to, renders the matching matplotlib figure next to it.
The Agg backend keeps this headless-safe.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = [
    "save_surface",
    "save_heatmap",
    "save_convergence",
    "save_noise_sweep",
    "save_flow_errors",
]


def save_surface(matrix: np.ndarray, grid, path: str, title: str):
    """3-D surface of a potential slice over the (q1, q2) grid."""
    q1, q2 = grid.axes()
    Q1, Q2 = np.meshgrid(q1, q2)
    fig = plt.figure(figsize=(6, 5))
    ax = fig.add_subplot(111, projection="3d")
    ax.plot_surface(Q1, Q2, np.ma.masked_invalid(matrix), cmap="viridis", linewidth=0)
    ax.set_xlabel("$q_1$")
    ax.set_ylabel("$q_2$")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_heatmap(matrix: np.ndarray, grid, path: str, title: str):
    """Heatmap of a grid-valued quantity (NaN cells left blank)."""
    q1, q2 = grid.axes()
    fig, ax = plt.subplots(figsize=(6, 5))
    mesh = ax.pcolormesh(q1, q2, np.ma.masked_invalid(matrix), cmap="magma", shading="auto")
    fig.colorbar(mesh, ax=ax)
    ax.set_xlabel("$q_1$")
    ax.set_ylabel("$q_2$")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_convergence(result, path: str):
    """Log-log mean grid error against N, annotated with the fitted slope."""
    ns = [row[0] for row in result.aggregates]
    means = [row[3] for row in result.aggregates]
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.loglog(ns, means, "o-", label="mean grid error")
    if result.slope is not None:
        ax.set_title(f"slope $\\approx$ {result.slope:.3f}")
    ax.set_xlabel("N")
    ax.set_ylabel("error")
    ax.grid(True, which="both", linestyle="--", alpha=0.4)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_noise_sweep(result, path: str):
    """Seed-averaged error against the observation noise level."""
    sigmas = [row[0] for row in result.aggregates]
    means = [row[2] for row in result.aggregates]
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.plot(sigmas, means, "o-")
    ax.set_xlabel("$\\sigma$")
    ax.set_ylabel("mean grid error")
    ax.grid(True, linestyle="--", alpha=0.4)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_flow_errors(errors, path: str):
    """Per-initial-condition flow discrepancies as a bar chart."""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.bar(range(len(errors)), errors)
    ax.set_xlabel("initial condition")
    ax.set_ylabel("sup flow discrepancy")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
