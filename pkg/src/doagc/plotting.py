"""Figures written next to the CSV reports when ``--figures`` is given."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .model import EpochRecord  # noqa: E402

STYLE = {
    "figure.figsize": (7.0, 3.0),
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
}


def plot_trace(trace: list[EpochRecord], path) -> Path:
    """Loss curves on the left, adaptive weight per view on the right."""
    epochs = [r.epoch for r in trace]
    with plt.rc_context(STYLE):
        fig, (ax_loss, ax_w) = plt.subplots(1, 2)
        ax_loss.plot(epochs, [r.loss for r in trace], label="total")
        ax_loss.plot(epochs, [r.loss_rec for r in trace], label="rec", lw=0.8)
        ax_loss.plot(epochs, [r.loss_nrec for r in trace], label="nrec", lw=0.8)
        ax_loss.set_xlabel("epoch")
        ax_loss.set_ylabel("loss")
        ax_loss.legend(frameon=False)
        for v in range(len(trace[0].w)):
            ax_w.plot(epochs, [r.w[v] for r in trace], label=f"view {v + 1}")
        ax_w.set_xlabel("epoch")
        ax_w.set_ylabel("w")
        ax_w.set_ylim(0, 1)
        ax_w.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return Path(path)


def plot_sweep(param: str, rows: list[dict], path) -> Path:
    values = [r["value"] for r in rows]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for key in ("acc", "nmi", "ari", "f1"):
            ys = [r.get(key) for r in rows]
            if all(y is not None for y in ys):
                ax.plot(values, ys, marker="o", label=key.upper())
        ax.set_xlabel(param)
        ax.set_ylabel("score")
        ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return Path(path)
