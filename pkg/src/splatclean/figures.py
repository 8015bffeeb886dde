"""Matplotlib figure output for the calibrate and report paths."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def score_histogram_figure(scores: np.ndarray, tau: float | None, path: str | Path) -> None:
    """Histogram of positive normalized scores with the threshold marked."""
    positives = np.asarray(scores, dtype=np.float64)
    positives = positives[positives > 0]
    fig, ax = plt.subplots(figsize=(6, 4))
    if positives.size:
        ax.hist(positives, bins=40, color="#4878cf", edgecolor="white")
    ax.set_xlabel("normalized semantic score")
    ax.set_ylabel("primitives")
    title = "Positive score distribution"
    if tau is not None:
        ax.axvline(tau, color="#d1495b", linestyle="--", label=f"tau = {tau:.4f}")
        ax.legend()
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def arm_comparison_figure(rows: list[dict], path: str | Path) -> None:
    """Per-arm PSNR bars plus removal/retention markers."""
    names = [r["arm"] for r in rows]
    psnrs = [r["psnr"] for r in rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    ax1.bar(names, psnrs, color="#4878cf")
    ax1.set_ylabel("test PSNR (dB)")
    ax1.set_title("Held-out reconstruction quality")
    ax1.tick_params(axis="x", rotation=20)

    removal = [r.get("removal_rate") for r in rows]
    retention = [r.get("static_retention") for r in rows]
    x = np.arange(len(names))
    width = 0.35
    ax2.bar(x - width / 2, [0.0 if v is None else v for v in removal], width,
            label="distractor removal", color="#d1495b")
    ax2.bar(x + width / 2, [0.0 if v is None else v for v in retention], width,
            label="static retention", color="#66a182")
    ax2.set_xticks(x)
    ax2.set_xticklabels(names, rotation=20)
    ax2.set_ylim(0, 1.05)
    ax2.set_title("Transient suppression")
    ax2.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def loss_curve_figure(loss_rows: list[list[float]], path: str | Path) -> None:
    rows = np.asarray(loss_rows, dtype=np.float64)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(rows[:, 0], rows[:, 3], label="total", color="#4878cf", linewidth=0.8)
    ax.plot(rows[:, 0], rows[:, 1], label="photometric", color="#66a182", linewidth=0.8)
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
