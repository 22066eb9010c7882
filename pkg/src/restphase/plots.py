"""SVG figures for calibration and agreement reports.

The SVGs carry no timestamp and use a fixed id salt, so identical inputs give
identical files.
"""

from __future__ import annotations

import io

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .calibration import SweepResult  # noqa: E402
from .io import atomic_write_text  # noqa: E402

_RC = {"svg.hashsalt": "restphase", "svg.fonttype": "path", "font.size": 9}


def _save(fig, path) -> None:
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    atomic_write_text(path, buf.getvalue())


def roc_svg(result: SweepResult, path) -> None:
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4, 4))
        pts = sorted(result.roc_points())
        ax.plot([p[0] for p in pts], [p[1] for p in pts], "-", color="C0", lw=1.5)
        ax.plot([0, 1], [0, 1], ":", color="0.6", lw=1)
        ax.set_xlabel("1 - specificity")
        ax.set_ylabel("sensitivity")
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1.01)
        ax.set_title(f"ROC (AUC = {result.auc:.3f})")
        fig.tight_layout()
        _save(fig, path)


def accuracy_svg(result: SweepResult, path) -> None:
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5, 3.2))
        taus = [r.tau for r in result.rows]
        ax.plot(taus, [r.tpr for r in result.rows], color="C1", lw=1, label="sensitivity")
        ax.plot(taus, [r.tnr for r in result.rows], color="C2", lw=1, label="specificity")
        ax.plot(taus, [r.balanced_accuracy for r in result.rows], color="C0", lw=1.8,
                label="balanced accuracy")
        ax.axvline(result.best_tau, color="k", ls="--", lw=0.8)
        ax.annotate(f"tau = {result.best_tau:.2f}", (result.best_tau, 0.05),
                    xytext=(4, 0), textcoords="offset points")
        ax.set_xlabel("threshold tau")
        ax.set_ylim(0, 1.02)
        ax.legend(loc="lower right", frameon=False)
        fig.tight_layout()
        _save(fig, path)


def bland_altman_svg(stats: dict, path, title: str = "endpoint agreement") -> None:
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.scatter(stats.get("means", []), stats.get("differences", []), s=10, color="C0")
        if stats.get("n"):
            for key, ls in (("mean_difference", "-"), ("lower_limit", "--"), ("upper_limit", "--")):
                ax.axhline(stats[key], color="k", ls=ls, lw=0.8)
        ax.set_xlabel("mean of predicted and reference (ms)")
        ax.set_ylabel("predicted - reference (ms)")
        ax.set_title(title)
        fig.tight_layout()
        _save(fig, path)
