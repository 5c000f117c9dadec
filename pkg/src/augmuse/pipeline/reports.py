"""Rendered artifacts: confusion heatmaps and class-duration bars (PNG + CSV)."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from ..metrics import ConfusionMatrix


def save_confusion(
    cm: ConfusionMatrix,
    classes: Sequence[str],
    png_path: str | Path,
    csv_path: str | Path | None = None,
    title: str = "Normalized confusion",
) -> None:
    png_path = Path(png_path)
    png_path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(1.0 + 0.6 * len(classes), 1.0 + 0.6 * len(classes)))
    im = ax.imshow(cm.normalized, vmin=0.0, vmax=1.0, cmap="viridis")
    ax.set_xticks(range(len(classes)), classes, rotation=45, ha="right", fontsize=7)
    ax.set_yticks(range(len(classes)), classes, fontsize=7)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    ax.set_title(title, fontsize=9)
    for i in range(len(classes)):
        for j in range(len(classes)):
            ax.text(j, i, f"{cm.normalized[i, j]:.2f}", ha="center", va="center", fontsize=6,
                    color="white" if cm.normalized[i, j] < 0.5 else "black")
    fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    fig.savefig(png_path, dpi=150)
    plt.close(fig)

    if csv_path is not None:
        csv_path = Path(csv_path)
        csv_path.parent.mkdir(parents=True, exist_ok=True)
        with csv_path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["true\\predicted"] + list(classes))
            for i, name in enumerate(classes):
                writer.writerow([name] + [f"{v:.6f}" for v in cm.normalized[i]])


def save_durations(
    hours: dict[str, float],
    png_path: str | Path,
    csv_path: str | Path | None = None,
    title: str = "Duration per class (h)",
) -> None:
    png_path = Path(png_path)
    png_path.parent.mkdir(parents=True, exist_ok=True)
    names = list(hours.keys())
    values = [hours[n] for n in names]
    fig, ax = plt.subplots(figsize=(1.5 + 0.5 * len(names), 3.0))
    ax.bar(np.arange(len(names)), values)
    ax.set_xticks(range(len(names)), names, rotation=45, ha="right", fontsize=7)
    ax.set_ylabel("hours")
    ax.set_title(title, fontsize=9)
    fig.tight_layout()
    fig.savefig(png_path, dpi=150)
    plt.close(fig)

    if csv_path is not None:
        csv_path = Path(csv_path)
        csv_path.parent.mkdir(parents=True, exist_ok=True)
        with csv_path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["class", "hours"])
            for name in names:
                writer.writerow([name, f"{hours[name]:.6f}"])
