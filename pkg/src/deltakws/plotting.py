"""Figures written next to the CSV reports (SVG by default, any matplotlib format)."""

from __future__ import annotations

import contextlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.2,
    "svg.hashsalt": "deltakws",  # stable element ids
    "svg.fonttype": "none",
}


@contextlib.contextmanager
def figure(width=4.5, height=3.4):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(width, height))
        try:
            yield fig, ax
        finally:
            plt.close(fig)


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, metadata={"Date": None} if str(path).endswith(".svg") else None)


def _far_floor(curves):
    positive = [p.far_per_hour for c in curves.values() for p in c.points
                if 0 < p.far_per_hour < np.inf]
    return min(positive) / 2 if positive else 0.1


def plot_det(curves: dict, path, operating_point=None, title=None):
    """One FRR-vs-FAR polyline per condition; FAR on a log axis.

    Zero-FAR points are drawn at half the smallest positive FAR so they
    stay on the log axis. The operating point is marked with a square.
    """
    floor = _far_floor(curves)
    with figure() as (fig, ax):
        for label, curve in curves.items():
            far = np.array([max(p.far_per_hour, floor) for p in curve.points])
            frr = np.array([p.frr for p in curve.points])
            line, = ax.plot(far, frr, drawstyle="steps-post", label=str(label))
            if operating_point is not None:
                p = curve.at(operating_point)
                ax.plot([max(p.far_per_hour, floor)], [p.frr], "s", ms=5,
                        color=line.get_color())
        ax.set_xscale("log")
        ax.set_xlabel("false alarms per hour")
        ax.set_ylabel("FRR")
        ax.set_ylim(-0.02, 1.02)
        if title:
            ax.set_title(title)
        ax.legend(title="condition", loc="upper right")
        _save(fig, path)


def plot_score_scatter(reference, other, path, label="gain", pr=None):
    with figure(3.4, 3.4) as (fig, ax):
        ax.plot(reference, other, ".", ms=3, alpha=0.7)
        lo = min(np.min(reference, initial=0), np.min(other, initial=0))
        ax.plot([lo, 1], [lo, 1], "k--", lw=0.8)
        ax.set_xlabel("decoding score, 0 dB")
        ax.set_ylabel(f"decoding score, {label}")
        if pr is not None:
            ax.set_title(f"pr = {pr:.4f}")
        _save(fig, path)


def plot_loss(histories: dict, path):
    with figure() as (fig, ax):
        for label, hist in histories.items():
            ax.plot([h.epoch for h in hist], [h.mean_loss for h in hist], label=label)
        ax.set_yscale("log")
        ax.set_xlabel("epoch")
        ax.set_ylabel("mean cross-entropy")
        ax.legend()
        _save(fig, path)
