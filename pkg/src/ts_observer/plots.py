"""Figure rendering for the report paths.

Every figure is rendered next to the delimited output it visualizes, using
the non-interactive Agg backend. Figures are a convenience view; the CSV and
JSON artifacts remain the authoritative, byte-reproducible outputs.
"""

from __future__ import annotations

from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:  # pragma: no cover
    from .diagnostics import CounterexampleReport, RegretReport
    from .harness import RunSummary


def _pyplot():
    import matplotlib

    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    return plt


def render_run_figures(summary: "RunSummary", fig_dir: Path) -> list[Path]:
    """Frequency-convergence and regret figures for an experiment run."""
    plt = _pyplot()
    written: list[Path] = []
    ck = np.asarray(summary.checkpoints)
    k = summary.config.model.n_actions

    fig, ax = plt.subplots(figsize=(7, 4.5))
    freqs = np.array([r.checkpoint_frequencies for r in summary.rows])  # (n, C, K)
    for a in range(k):
        ax.plot(ck, freqs[:, :, a].mean(axis=0), marker="o", label=f"action {a}")
    ax.set_xscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel("mean visit frequency")
    ax.set_ylim(-0.02, 1.02)
    ax.set_title(f"Per-action visit frequency ({len(summary.rows)} replications)")
    ax.legend(loc="best", fontsize=8)
    path = fig_dir / "frequency_convergence.png"
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(7, 4.5))
    cum = np.array([r.cumulative_regret for r in summary.rows])
    mean = cum.mean(axis=0)
    ax.plot(ck, mean / ck, marker="o", color="tab:red", label="cumulative regret / t")
    ax.set_xscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel("regret / t")
    ax.set_title("Time-averaged regret")
    ax.legend(loc="best", fontsize=8)
    path = fig_dir / "regret.png"
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    written.append(path)
    return written


def render_regret_figure(report: "RegretReport", path: Path) -> Path:
    """Per-step gap and normalized cumulative regret from a regret study."""
    plt = _pyplot()
    t = np.arange(1, report.horizon + 1)
    cum = report.cumulative

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    ax1.plot(t, report.per_step_mean, lw=0.8, color="tab:blue")
    ax1.fill_between(
        t,
        report.per_step_mean - 2 * report.per_step_se,
        report.per_step_mean + 2 * report.per_step_se,
        alpha=0.25,
        color="tab:blue",
        linewidth=0,
    )
    ax1.set_xscale("log")
    ax1.set_xlabel("t")
    ax1.set_ylabel("mean per-step gap")
    ax1.set_title(f"Per-step regret ({report.n_replications} replications)")

    ax2.plot(t, cum / t, lw=1.0, label="cumulative / t", color="tab:red")
    ax2.plot(t, cum / np.sqrt(t), lw=1.0, label="cumulative / sqrt(t)", color="tab:green")
    ax2.set_xscale("log")
    ax2.set_xlabel("t")
    ax2.set_title("Normalized cumulative regret")
    ax2.legend(loc="best", fontsize=8)

    fig.tight_layout()
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return path


def render_counterexample_figure(report: "CounterexampleReport", path: Path) -> Path:
    """Falling time-averaged regret next to growing fixed-arm visit counts."""
    plt = _pyplot()
    rows = report.checkpoint_rows
    t = np.array([r.t for r in rows])

    fig, ax1 = plt.subplots(figsize=(7, 4.5))
    ax1.plot(t, [r.mean_regret_over_t for r in rows], marker="o", color="tab:red")
    ax1.set_xscale("log")
    ax1.set_xlabel("t")
    ax1.set_ylabel("cumulative regret / t", color="tab:red")
    ax1.tick_params(axis="y", labelcolor="tab:red")

    ax2 = ax1.twinx()
    ax2.plot(
        t, [r.mean_fixed_count for r in rows], marker="s", color="tab:blue"
    )
    ax2.set_yscale("log")
    ax2.set_ylabel(f"visits of action {report.fixed_action}", color="tab:blue")
    ax2.tick_params(axis="y", labelcolor="tab:blue")

    ax1.set_title("Sublinear regret with non-vanishing visits")
    fig.tight_layout()
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return path
