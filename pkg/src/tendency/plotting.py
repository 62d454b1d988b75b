"""Report figures written as PNG files.

Figures carry no timestamp or software tag so reruns give identical bytes.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from tendency.features import DAY_NAMES  # noqa: E402

_HOURGROUP_LABELS = ["0-3", "3-6", "6-9", "9-12", "12-15", "15-18", "18-21", "21-24"]
_PNG_META = {"Software": None}


def _save(fig, path: str | os.PathLike) -> None:
    fig.savefig(path, format="png", dpi=100, metadata=_PNG_META)
    plt.close(fig)


def plot_booking_histograms(days: np.ndarray, groups: np.ndarray, path: str | os.PathLike) -> None:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.2))
    ax1.bar(DAY_NAMES, days, color="#4878a8")
    ax1.set_title("bookings per day")
    ax2.bar(_HOURGROUP_LABELS, groups, color="#6a9f58")
    ax2.set_title("bookings per hourgroup")
    ax2.tick_params(axis="x", labelrotation=45)
    fig.tight_layout()
    _save(fig, path)


def plot_confusion(tn: int, fp: int, fn: int, tp: int, path: str | os.PathLike, title: str = "") -> None:
    cm = np.array([[tn, fp], [fn, tp]])
    fig, ax = plt.subplots(figsize=(3.6, 3.2))
    ax.imshow(cm, cmap="Blues")
    for (i, j), v in np.ndenumerate(cm):
        ax.text(j, i, str(v), ha="center", va="center", color="black")
    ax.set_xticks([0, 1], ["timely", "late"])
    ax.set_yticks([0, 1], ["timely", "late"])
    ax.set_xlabel("predicted")
    ax.set_ylabel("actual")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    _save(fig, path)


def plot_mrmr(ranking: list[tuple[str, float]], path: str | os.PathLike) -> None:
    names = [n for n, _ in ranking][::-1]
    scores = [s for _, s in ranking][::-1]
    fig, ax = plt.subplots(figsize=(7, 0.3 * len(ranking) + 1.0))
    ax.barh(names, scores, color="#b0603a")
    ax.axvline(0.0, color="gray", linewidth=0.8)
    ax.set_xlabel("mRmR score (nats)")
    ax.tick_params(axis="y", labelsize=7)
    fig.tight_layout()
    _save(fig, path)
