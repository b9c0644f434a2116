"""Matplotlib figures written next to the CSV outputs."""

from __future__ import annotations

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
    "legend.frameon": False,
    "savefig.dpi": 120,
    "savefig.bbox": "tight",
}


def moving_average(x: np.ndarray, window: int) -> np.ndarray:
    window = max(1, min(window, len(x)))
    return np.convolve(x, np.ones(window) / window, mode="valid")


def plot_loss_curves(losses: dict, path, window: int = 25) -> Path:
    """Discriminator and generator losses per iteration, raw and smoothed."""
    path = Path(path)
    it = losses["iter"]
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 2, sharex=True)
        for ax, key, title in ((axes[0], "d_loss", "discriminator"),
                               (axes[1], "g_total", "generator (total)")):
            y = losses[key]
            ax.plot(it, y, lw=0.6, alpha=0.4, color="C0")
            if len(y) >= 2:
                sm = moving_average(y, window)
                ax.plot(it[len(it) - len(sm):], sm, lw=1.4, color="C0")
            ax.set_title(title)
            ax.set_xlabel("iteration")
        axes[0].set_ylabel("loss")
        fig.savefig(path)
        plt.close(fig)
    return path


def plot_score_distribution(minima: np.ndarray, path, score: float | None = None,
                            label: str = "") -> Path:
    """Histogram of per-patch nearest LBP distances with the mean marked."""
    path = Path(path)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.hist(minima, bins=40, color="C1", alpha=0.8)
        if score is not None:
            ax.axvline(score, color="k", lw=1, ls="--", label=f"S={score:.4f}")
            ax.legend()
        ax.set_xlabel("nearest-patch LBP distance")
        ax.set_ylabel("patches")
        if label:
            ax.set_title(label)
        fig.savefig(path)
        plt.close(fig)
    return path


def save_contact_sheet(images, path, ncols: int = 4, titles=None) -> Path:
    """Grid of [0, 1] images, e.g. mosaics or content/render pairs."""
    path = Path(path)
    images = list(images)
    nrows = max(1, -(-len(images) // ncols))
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(nrows, ncols, figsize=(2 * ncols, 2 * nrows), squeeze=False)
        for ax in axes.ravel():
            ax.axis("off")
        for k, img in enumerate(images):
            ax = axes.ravel()[k]
            ax.imshow(np.clip(img, 0, 1), interpolation="nearest")
            if titles:
                ax.set_title(titles[k], fontsize=8)
        fig.savefig(path)
        plt.close(fig)
    return path
