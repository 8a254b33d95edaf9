"""Figure rendering for search and training reports.

Figures are written next to the delimited output of the same run; they are
for human inspection only and carry no data not present in the CSVs.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def save_reward_figure(records, path):
    """Reward/baseline curve plus sampled model-size trace for one search run."""
    steps = range(len(records))
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    ax1.plot(steps, [r.reward for r in records], lw=0.8, label="reward")
    ax1.plot(steps, [r.baseline for r in records], lw=1.2, label="baseline")
    ax1.set_ylabel("reward")
    ax1.legend(loc="best", fontsize=8)
    ax1.grid(alpha=0.3)
    ax2.plot(steps, [r.n_params for r in records], lw=0.8, color="tab:red")
    ax2.set_ylabel("sampled parameters")
    ax2.set_xlabel("controller step")
    ax2.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_param_scatter(records, path):
    """Performance-versus-size scatter of all sampled candidates."""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.scatter([r.n_params for r in records], [r.psnr for r in records],
               s=12, alpha=0.5, edgecolors="none")
    ax.set_xlabel("parameters")
    ax.set_ylabel("performance")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_history_figure(history, path):
    """Training loss and validation PSNR over final-training steps."""
    steps = [p.step for p in history]
    fig, ax1 = plt.subplots(figsize=(7, 4.5))
    ax1.plot(steps, [p.loss for p in history], color="tab:blue", lw=1.0, label="train L1")
    ax1.set_xlabel("step")
    ax1.set_ylabel("L1 loss", color="tab:blue")
    ax2 = ax1.twinx()
    ax2.plot(steps, [p.val_psnr for p in history], color="tab:orange", lw=1.2, label="val PSNR")
    ax2.set_ylabel("validation PSNR (dB)", color="tab:orange")
    ax1.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
