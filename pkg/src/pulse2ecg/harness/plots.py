"""Report tables and figures. CSV files are the source of truth; each CSV
gets a static SVG rendering next to it."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def _svg_path(csv_path) -> Path:
    return Path(csv_path).with_suffix(".svg")


def write_loss_curve(history, csv_path) -> None:
    history = np.asarray(history, dtype=np.float64)
    with open(csv_path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["step", "loss"])
        for i, v in enumerate(history):
            w.writerow([i, repr(float(v))])
    fig, ax = plt.subplots(figsize=(6, 3.2))
    if history.size:
        ax.plot(history, lw=0.8)
        ax.set_yscale("log")
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    fig.tight_layout()
    fig.savefig(_svg_path(csv_path))
    plt.close(fig)


def write_hr_scatter(hr_pairs, csv_path) -> None:
    with open(csv_path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["hr_real", "hr_gen"])
        for hr_real, hr_gen in hr_pairs:
            w.writerow([repr(float(hr_real)), repr(float(hr_gen))])
    fig, ax = plt.subplots(figsize=(4, 4))
    if hr_pairs:
        arr = np.asarray(hr_pairs, dtype=np.float64)
        ax.scatter(arr[:, 0], arr[:, 1], s=8, alpha=0.6)
        lo, hi = arr.min() - 2, arr.max() + 2
        ax.plot([lo, hi], [lo, hi], "k--", lw=0.8)
    ax.set_xlabel("HR real (bpm)")
    ax.set_ylabel("HR generated (bpm)")
    fig.tight_layout()
    fig.savefig(_svg_path(csv_path))
    plt.close(fig)


def write_overlays(real, gen, csv_path, max_segments: int = 4) -> None:
    real = np.asarray(real, dtype=np.float64)
    gen = np.asarray(gen, dtype=np.float64)
    k = min(max_segments, real.shape[0])
    with open(csv_path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["segment", "sample", "real", "generated"])
        for s in range(k):
            for i in range(real.shape[1]):
                w.writerow([s, i, repr(float(real[s, i])), repr(float(gen[s, i]))])
    fig, axes = plt.subplots(k, 1, figsize=(8, 2.0 * max(k, 1)), squeeze=False)
    for s in range(k):
        ax = axes[s, 0]
        ax.plot(real[s], lw=0.7, label="real")
        ax.plot(gen[s], lw=0.7, label="generated")
        if s == 0:
            ax.legend(loc="upper right", fontsize=7)
    fig.tight_layout()
    fig.savefig(_svg_path(csv_path))
    plt.close(fig)
