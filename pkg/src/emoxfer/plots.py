"""Plot emission: loss curves, intensity histograms, F0 contours, mel images."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .errors import DataError


def plot_losses(log_path, out_path) -> str:
    rows = []
    with open(log_path) as fh:
        header = fh.readline().strip().split("\t")
        for line in fh:
            if line.strip():
                rows.append([float(x) for x in line.split("\t")])
    if not rows:
        raise DataError(f"{log_path}: no training log rows")
    data = np.array(rows)
    columns = {name: data[:, i] for i, name in enumerate(header)}
    fig, ax = plt.subplots(figsize=(8, 5))
    for key in ("l_mel", "l_pros", "total"):
        ax.plot(columns["step"], columns[key], label=key)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=110)
    plt.close(fig)
    return str(out_path)


def plot_intensity_histograms(report_path, out_dir) -> list:
    """One panel per alpha from an intensity_report.tsv; returns written paths."""
    rows = []
    with open(report_path) as fh:
        fh.readline()
        for line in fh:
            parts = line.strip().split("\t")
            if len(parts) >= 3:
                rows.append((float(parts[0]), int(parts[1]),
                             np.array([int(x) for x in parts[2:]])))
    if not rows:
        raise DataError(f"{report_path}: empty intensity report")
    alphas = sorted({r[0] for r in rows})
    written = []
    for alpha in alphas:
        per_emotion = [(e, h) for a, e, h in rows if a == alpha]
        fig, axes = plt.subplots(1, len(per_emotion), figsize=(3.2 * len(per_emotion), 3),
                                 squeeze=False)
        centers = (np.arange(len(per_emotion[0][1])) + 0.5) / len(per_emotion[0][1])
        for ax, (emotion, hist) in zip(axes[0], per_emotion):
            ax.bar(centers, hist, width=1.0 / len(hist))
            ax.set_title(f"emotion {emotion}")
            ax.set_xlabel("intensity")
        fig.suptitle(f"alpha = {alpha}")
        fig.tight_layout()
        out_path = os.path.join(str(out_dir), f"intensity_hist_alpha{alpha}.png")
        fig.savefig(out_path, dpi=110)
        plt.close(fig)
        written.append(out_path)
    return written


def plot_f0_contours(traces: dict, out_path) -> str:
    """Per-frame log-F0 traces keyed by level name (low/moderate/high)."""
    if not traces:
        raise DataError("no contours to plot")
    fig, ax = plt.subplots(figsize=(8, 4))
    for label, contour in traces.items():
        ax.plot(np.asarray(contour), label=label)
    ax.set_xlabel("frame")
    ax.set_ylabel("log F0")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=110)
    plt.close(fig)
    return str(out_path)


def plot_mel(mel_values, out_path) -> str:
    fig, ax = plt.subplots(figsize=(8, 4))
    ax.imshow(np.asarray(mel_values).T, origin="lower", aspect="auto",
              interpolation="nearest")
    ax.set_xlabel("frame")
    ax.set_ylabel("mel band")
    fig.tight_layout()
    fig.savefig(out_path, dpi=110)
    plt.close(fig)
    return str(out_path)
