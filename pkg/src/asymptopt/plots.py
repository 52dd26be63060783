"""Figures for the CLI report path. Only the CLI imports this module, so the
core library never needs matplotlib."""
from __future__ import annotations

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

_META = {"Software": None}


def _figure(size=(5.0, 4.0)):
    fig = Figure(figsize=size)
    FigureCanvasAgg(fig)
    return fig, fig.add_subplot(1, 1, 1)


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata=_META)


def plot_fronts(path, weak: np.ndarray, strong: np.ndarray | None, grid: np.ndarray | None = None,
                title: str = ""):
    """Feasible grid, weak Pareto and Pareto clouds (decision space)."""
    fig, ax = _figure()
    n = weak.shape[1] if weak.size else (grid.shape[1] if grid is not None else 1)
    layers = [(grid, dict(s=2, c="0.8", label="grid")), (weak, dict(s=6, c="tab:blue", label="weak Pareto"))]
    if strong is not None:
        layers.append((strong, dict(s=2, c="tab:red", label="Pareto")))
    for k, (pts, style) in enumerate(layers):
        if pts is None or not pts.size:
            continue
        if n == 1:
            ax.scatter(pts[:, 0], np.full(pts.shape[0], -k), **style)
        else:
            ax.scatter(pts[:, 0], pts[:, 1], **style)
    if n == 1:
        ax.set_yticks([])
        ax.set_xlabel("x")
    else:
        ax.set_xlabel("x1")
        ax.set_ylabel("x2")
        ax.set_aspect("equal", adjustable="datalim")
    ax.set_title(title)
    ax.legend(loc="best", fontsize=8)
    _save(fig, path)


def plot_sweep(path, clouds: list, labels: list, W0: np.ndarray, title: str = ""):
    """One row per perturbation for 1-d problems, an overlay for 2-d ones."""
    fig, ax = _figure((5.5, max(3.0, 0.12 * len(clouds) + 1.5)))
    dim = W0.shape[1] if W0.size else next((c.shape[1] for c in clouds if c.size), 1)
    if dim == 1:
        for k, pts in enumerate([W0] + clouds):
            if pts.size:
                ax.plot([pts[:, 0].min(), pts[:, 0].max()], [k, k], lw=2,
                        c="k" if k == 0 else "tab:blue")
            else:
                ax.plot([], [])
        ax.set_yticks(range(len(clouds) + 1))
        ax.set_yticklabels(["u = 0"] + labels, fontsize=5)
        ax.set_xlabel("x")
    else:
        for pts in clouds:
            if pts.size:
                ax.scatter(pts[:, 0], pts[:, 1], s=1, c="tab:blue", alpha=0.3)
        if W0.size:
            ax.scatter(W0[:, 0], W0[:, 1], s=3, c="k", label="u = 0")
        ax.set_xlabel("x1")
        ax.set_ylabel("x2")
        ax.legend(loc="best", fontsize=8)
    ax.set_title(title)
    _save(fig, path)


def plot_psi(path, points: np.ndarray, psi: np.ndarray, title: str = ""):
    fig, ax = _figure()
    if points.shape[1] == 1:
        order = np.argsort(points[:, 0])
        ax.plot(points[order, 0], psi[order], lw=1)
        ax.set_xlabel("x")
        ax.set_ylabel("psi")
    else:
        sc = ax.scatter(points[:, 0], points[:, 1], c=psi, s=3, cmap="viridis")
        fig.colorbar(sc, ax=ax, label="psi")
        ax.set_xlabel("x1")
        ax.set_ylabel("x2")
    ax.set_title(title)
    _save(fig, path)
