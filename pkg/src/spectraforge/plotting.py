"""Matplotlib figures written next to the CSV outputs (loss history, density map)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["plot_density", "plot_loss_history"]

_RC = {
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
}


def plot_loss_history(hist: dict[str, np.ndarray], path: str | Path, title: str = "") -> Path:
    """Three stacked panels: losses, eigenvalue estimate, mean density."""
    epoch = hist["epoch"]
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(3, 1, figsize=(5.0, 6.0), sharex=True)
        ax = axes[0]
        ax.plot(epoch, hist["L_sum"], label=r"$\mathcal{L}_{sum}$", lw=1.2)
        ax.plot(epoch, hist["L_in"], label=r"$\mathcal{L}_{in}$", lw=1.0, ls="--")
        if np.any(hist["L_b"] != 0):
            ax.plot(epoch, hist["L_b"], label=r"$\mathcal{L}_b$", lw=1.0, ls=":")
        span = np.nanmax(np.abs(hist["L_in"])) / max(np.nanmin(np.abs(hist["L_in"])), 1e-300)
        if span > 20:
            ax.set_yscale("symlog")
        ax.set_ylabel("loss")
        ax.legend(frameon=False, fontsize=8)
        axes[1].plot(epoch, hist["lambda"], color="C3", lw=1.2)
        axes[1].set_ylabel(r"$\lambda$ estimate")
        axes[2].plot(epoch, hist["mass"], color="C2", lw=1.2)
        axes[2].set_ylabel("mean density")
        axes[2].set_xlabel("epoch")
        if title:
            axes[0].set_title(title)
        fig.tight_layout()
        path = Path(path)
        fig.savefig(path)
        plt.close(fig)
    return path


def plot_density(
    points: np.ndarray,
    inside: np.ndarray,
    rho: np.ndarray,
    path: str | Path,
    *,
    rho_lo: float,
    rho_hi: float,
    title: str = "",
) -> Path:
    """Density on the grid; 3D data is shown as three mid-planes."""
    points = np.asarray(points)
    inside = np.asarray(inside, dtype=bool)
    vals = np.where(inside, rho, np.nan)
    axes_vals = [np.unique(points[:, i]) for i in range(points.shape[1])]
    shape = tuple(a.size for a in axes_vals)
    grid = vals.reshape(shape)
    with plt.rc_context(_RC):
        if len(shape) == 2:
            fig, ax = plt.subplots(figsize=(4.4, 4.0 * shape[1] / shape[0] + 0.6))
            panels = [(ax, grid.T, axes_vals[0], axes_vals[1], "x", "y")]
        else:
            fig, axs = plt.subplots(1, 3, figsize=(10.0, 3.4))
            mid = [s // 2 for s in shape]
            panels = [
                (axs[0], grid[:, :, mid[2]].T, axes_vals[0], axes_vals[1], "x", "y"),
                (axs[1], grid[:, mid[1], :].T, axes_vals[0], axes_vals[2], "x", "z"),
                (axs[2], grid[mid[0], :, :].T, axes_vals[1], axes_vals[2], "y", "z"),
            ]
        for ax, img, a, b, la, lb in panels:
            im = ax.imshow(
                img,
                origin="lower",
                extent=(a[0], a[-1], b[0], b[-1]),
                vmin=rho_lo,
                vmax=rho_hi,
                cmap="viridis",
                interpolation="nearest",
            )
            ax.set_xlabel(la)
            ax.set_ylabel(lb)
            ax.set_aspect("equal")
            ax.grid(False)
        fig.colorbar(im, ax=[p[0] for p in panels], shrink=0.85, label=r"$\hat\rho$")
        if title:
            fig.suptitle(title)
        path = Path(path)
        fig.savefig(path, bbox_inches="tight")
        plt.close(fig)
    return path
