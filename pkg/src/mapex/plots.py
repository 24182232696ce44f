"""Matplotlib figures written next to the JSON/CSV reports."""

from __future__ import annotations

import math
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .evalkit import GainReport  # noqa: E402

_STYLE = {
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "savefig.dpi": 150,
}


def _series(centers, values):
    pts = [(c, v) for c, v in zip(centers, values) if v is not None]
    return [p[0] for p in pts], [p[1] for p in pts]


def plot_gain(report: GainReport, path: str | os.PathLike, length_threshold: int | None = None) -> None:
    with plt.rc_context(_STYLE):
        fig, (ax_r, ax_d) = plt.subplots(1, 2, figsize=(8, 3.2))
        for name, values in report.mean_relative.items():
            xs, ys = _series(report.centers, values)
            ax_r.plot(xs, [100 * y for y in ys], marker="o", ms=3, label=name)
        ax_r.axhline(0, color="0.4", lw=0.8)
        ax_r.set_xlabel("ln(length)")
        ax_r.set_ylabel("relative gain over base (%)")
        ax_r.set_title("(a) Relative gain over base")
        ax_r.legend(frameon=False)

        xs, ys = _series(report.centers, report.pair_delta)
        ax_d.bar(xs, [100 * y for y in ys], width=report.width * 0.8,
                 color=["tab:green" if y > 0 else "tab:red" for y in ys])
        ax_d.axhline(0, color="0.4", lw=0.8)
        ax_d.set_xlabel("ln(length)")
        ax_d.set_ylabel(f"F1@10 {report.pair[1]} - {report.pair[0]} (points)")
        ax_d.set_title("(b) Pipeline difference")

        for ax in (ax_r, ax_d):
            if report.transition_interval:
                ax.axvspan(*report.transition_interval, color="tab:orange", alpha=0.15, lw=0)
            if length_threshold:
                ax.axvline(math.log(length_threshold), color="k", ls="--", lw=0.8)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def plot_ablation(rows: list[dict], k_values: list[int], path: str | os.PathLike) -> None:
    """Grouped bars of the AVG F1 per ablation row, one group per K."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(7, 3.2))
        n = len(rows)
        width = 0.8 / max(n, 1)
        for i, row in enumerate(rows):
            xs = [j + i * width for j in range(len(k_values))]
            ys = [100 * row["scores"][str(k)]["f1"] for k in k_values]
            ax.bar(xs, ys, width=width, label=f"{row['label']} ({row['variant']})")
        ax.set_xticks([j + width * (n - 1) / 2 for j in range(len(k_values))])
        ax.set_xticklabels([f"F1@{k}" for k in k_values])
        ax.set_ylabel("F1 (%)")
        ax.legend(frameon=False, fontsize=7, ncol=2)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def plot_scores(report: dict, path: str | os.PathLike) -> None:
    """Per-dataset F1 for each K of a score report."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(7, 3.2))
        ks = list(report["k"])
        datasets = list(report["k"][ks[0]]) if ks else []
        width = 0.8 / max(len(ks), 1)
        for i, k in enumerate(ks):
            xs = [j + i * width for j in range(len(datasets))]
            ax.bar(xs, [100 * report["k"][k][d]["f1"] for d in datasets], width=width, label=f"F1@{k}")
        ax.set_xticks([j + width * (len(ks) - 1) / 2 for j in range(len(datasets))])
        ax.set_xticklabels(datasets)
        ax.set_ylabel("F1 (%)")
        ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
