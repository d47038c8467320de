"""Report figures (Agg backend, files only)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=110, bbox_inches="tight", metadata={"Software": None})
    plt.close(fig)
    return path


def plot_field_density(field, path, title=None):
    g = field.grid
    fig, ax = plt.subplots(figsize=(5, 4.4))
    ext = [-g.L1 / 2, g.L1 / 2, -g.L2 / 2, g.L2 / 2]
    im = ax.imshow(field.density(), origin="lower", extent=ext, cmap="magma", aspect="equal")
    fig.colorbar(im, ax=ax, label=r"$|\psi|^2$")
    ax.set_xlabel("$x_1$")
    ax.set_ylabel("$x_2$")
    ax.set_title(title or f"t = {field.t:.3g}, eps = {field.eps:g}")
    return _save(fig, path)


def plot_mode_density(dens, path, title=None):
    s, sg = dens.axes
    fig, ax = plt.subplots(figsize=(5.5, 3.6))
    im = ax.pcolormesh(s, sg, dens.values.T, shading="auto", cmap="viridis")
    fig.colorbar(im, ax=ax, label=rf"$\gamma_{{{dens.mode}}}$")
    ax.set_xlabel("s")
    ax.set_ylabel(r"$\sigma$")
    ax.set_title(title or f"mode n = {dens.mode}, t = {dens.t:.3g}")
    return _save(fig, path)


def plot_centroids(t, series, path, ylabel="s centroid"):
    """``series`` maps a label to (empirical, predicted) arrays."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for lab, (emp, pred) in series.items():
        line, = ax.plot(t, emp, "o", ms=4, label=f"{lab} measured")
        ax.plot(t, pred, "-", color=line.get_color(), label=f"{lab} characteristic")
    ax.set_xlabel("t")
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_errors(eps, err, path):
    eps = np.asarray(eps, float)
    err = np.asarray(err, float)
    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    ax.loglog(eps, err, "o-", label="measured")
    if len(eps) > 0 and err[0] > 0:
        ax.loglog(eps, err[0] * np.sqrt(eps / eps[0]), "--", label=r"$\propto \sqrt{\varepsilon}$")
    ax.set_xlabel(r"$\varepsilon$")
    ax.set_ylabel("L2 error at t_end")
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_mass(t, tube, bulk, path):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(t, tube, label="tube (mode sum)")
    ax.plot(t, bulk, label="bulk")
    ax.plot(t, np.asarray(tube) + np.asarray(bulk), "k--", label="total")
    ax.set_xlabel("t")
    ax.set_ylabel("mass")
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_chart(chart, tmap, path):
    model = chart.model
    fig, ax = plt.subplots(figsize=(5.5, 4.5))
    x = np.linspace(-model.L1 / 2, model.L1 / 2, 400)
    y = np.linspace(-model.L2 / 2, model.L2 / 2, 400)
    X, Y = np.meshgrid(x, y)
    M = model.mass(X, Y)
    lim = np.max(np.abs(M))
    ax.contourf(X, Y, M, levels=30, cmap="RdBu_r", vmin=-lim, vmax=lim)
    s = chart.s_grid[::10]
    for yy, st in ((0.0, "k-"), (tmap.halfwidth * 0.999, "k:"), (-tmap.halfwidth * 0.999, "k:")):
        p = tmap.forward(s, np.full_like(s, yy), check=False)
        ax.plot(p[:, 0], p[:, 1], st, lw=1)
    ax.set_xlim(x[0], x[-1])
    ax.set_ylim(y[0], y[-1])
    ax.set_aspect("equal")
    ax.set_title("interface and tube")
    return _save(fig, path)
