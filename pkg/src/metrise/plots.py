"""Figure rendering for report outputs.

Every writer takes data the pipeline already computed, renders one PNG
with the Agg backend, and returns the written path; nothing here touches
geometry. Figures are an opt-in companion to the CSV grids, not a
replacement for them.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be fixed first)
import numpy as np  # noqa: E402


def residual_heatmaps(X, Y, abs_a, abs_b, path) -> Path:
    """Side-by-side |a| and |b| maps over a chart grid."""
    fig, axes = plt.subplots(1, 2, figsize=(9.0, 3.8), constrained_layout=True)
    for ax, z, label in ((axes[0], abs_a, "|a|"), (axes[1], abs_b, "|b|")):
        mesh = ax.pcolormesh(X, Y, z, shading="auto")
        fig.colorbar(mesh, ax=ax)
        ax.set_title(label)
        ax.set_xlabel("x")
        ax.set_ylabel("y")
        ax.set_aspect("equal")
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def scalar_heatmap(X, Y, values, label: str, path) -> Path:
    """Single scalar map over a chart grid."""
    fig, ax = plt.subplots(figsize=(5.0, 4.0), constrained_layout=True)
    mesh = ax.pcolormesh(X, Y, values, shading="auto")
    fig.colorbar(mesh, ax=ax)
    ax.set_title(label)
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.set_aspect("equal")
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def sphere_heatmap(theta, phi, values, label: str, path) -> Path:
    """Scalar map over a latitude-longitude sampling of the sphere."""
    fig, ax = plt.subplots(figsize=(6.4, 3.4), constrained_layout=True)
    mesh = ax.pcolormesh(phi, theta, values, shading="auto")
    fig.colorbar(mesh, ax=ax)
    ax.set_title(label)
    ax.set_xlabel("azimuth")
    ax.set_ylabel("polar angle")
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def trace_figure(points, path) -> Path:
    """Sphere-image curves (n_curves, k, 3) on a translucent globe."""
    points = np.asarray(points, dtype=float)
    fig = plt.figure(figsize=(5.0, 5.0))
    ax = fig.add_subplot(projection="3d")
    u = np.linspace(0.0, 2.0 * np.pi, 24)
    t = np.linspace(0.0, np.pi, 12)
    ax.plot_wireframe(
        np.outer(np.cos(u), np.sin(t)),
        np.outer(np.sin(u), np.sin(t)),
        np.outer(np.ones_like(u), np.cos(t)),
        color="0.8",
        linewidth=0.4,
    )
    for curve in points:
        ax.plot(curve[:, 0], curve[:, 1], curve[:, 2], linewidth=1.2)
    ax.set_box_aspect((1.0, 1.0, 1.0))
    ax.set_axis_off()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def chart_paths_figure(paths, path) -> Path:
    """Plane trajectories given as (points, label) pairs."""
    fig, ax = plt.subplots(figsize=(5.0, 4.2), constrained_layout=True)
    for pts, label in paths:
        pts = np.asarray(pts, dtype=float)
        ax.plot(pts[:, 0], pts[:, 1], linewidth=1.2, label=label)
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.set_aspect("equal")
    ax.legend(loc="best", fontsize="small")
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)
