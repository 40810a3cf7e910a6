"""Figure rendering for training curves, iteration sweeps, and ablations.

Uses the Agg backend and strips the writer's software tag so that a fixed
seed reproduces output PNGs byte for byte on one machine.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

_SAVE = {"dpi": 120, "metadata": {"Software": None}}


def training_figure(result, path: str) -> None:
    """Two panels: per-step losses and held-out metrics over steps."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.6, 3.6))
    steps = [r["step"] for r in result.steps]
    ax1.plot(steps, [r["loss"] for r in result.steps], lw=0.8, label="total")
    ax1.plot(steps, [r["cycle"] for r in result.steps], lw=0.8, label="cycle")
    if any(r["geom"] != 0.0 for r in result.steps):
        ax1.plot(steps, [r["geom"] for r in result.steps], lw=0.8,
                 label="geometric")
    ax1.set_xlabel("step")
    ax1.set_ylabel("training loss")
    ax1.legend(frameon=False, fontsize=8)

    esteps = [r["step"] for r in result.evals]
    ax2.plot(esteps, [r["l1"] for r in result.evals], marker="o", ms=3,
             label="held-out l1")
    ax2.plot(esteps, [r["same_mean"] for r in result.evals], marker="s",
             ms=3, label="same mean")
    ax2.plot(esteps, [r["diff_mean"] for r in result.evals], marker="^",
             ms=3, label="diff mean")
    ax2.set_xlabel("step")
    ax2.set_ylabel("held-out metric")
    ax2.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_SAVE)
    plt.close(fig)


def sweep_figure(rows: list, path: str) -> None:
    """Reconstruction error against iteration count, one line per method."""
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    methods = []
    for r in rows:
        if r["method"] not in methods:
            methods.append(r["method"])
    for m in methods:
        pts = sorted((r["iters"], r["l1"]) for r in rows if r["method"] == m)
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", ms=3,
                label=m)
    ax.set_xlabel("iterations")
    ax.set_ylabel("l1 error")
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_SAVE)
    plt.close(fig)


def ablation_figure(rows: list, path: str) -> None:
    """Bar chart of final held-out l1 per config with std whiskers."""
    fig, ax = plt.subplots(figsize=(4.8, 3.6))
    labels = [r["config"] for r in rows]
    means = [r["mean_l1"] for r in rows]
    stds = [r["std_l1"] for r in rows]
    ax.bar(range(len(rows)), means, yerr=stds, capsize=4,
           color="#4878a8", edgecolor="black", linewidth=0.6)
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels(labels, fontsize=8)
    ax.set_ylabel("final held-out l1")
    fig.tight_layout()
    fig.savefig(path, **_SAVE)
    plt.close(fig)
