"""Count extraction and split-level error metrics.

MAE is the mean absolute count error; MSE follows the crowd-counting
convention and reports the *root* mean squared error; NAE normalizes each
absolute error by the ground-truth count and therefore skips images with a
zero ground truth (the skipped tally is reported). The count histogram uses
the standard density ranges 0-50, 51-100, 101-200, and >200.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

HISTOGRAM_EDGES = (50, 100, 200)
HISTOGRAM_LABELS = ("0-50", "51-100", "101-200", ">200")


@dataclass
class CountReport:
    mae: float
    mse: float
    nae: float
    images_evaluated: int
    images_skipped_nae: int
    histogram: tuple[int, int, int, int]

    def to_dict(self) -> dict:
        return {
            "mae": self.mae,
            "mse": self.mse,
            "nae": self.nae,
            "images_evaluated": self.images_evaluated,
            "images_skipped_nae": self.images_skipped_nae,
            "histogram": {label: count for label, count in
                          zip(HISTOGRAM_LABELS, self.histogram)},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_text(self) -> str:
        lines = [f"mae={self.mae:.6f}",
                 f"mse={self.mse:.6f}",
                 f"nae={self.nae:.6f}",
                 f"images_evaluated={self.images_evaluated}",
                 f"images_skipped_nae={self.images_skipped_nae}"]
        lines += [f"histogram[{label}]={count}" for label, count in
                  zip(HISTOGRAM_LABELS, self.histogram)]
        return "\n".join(lines) + "\n"


def threshold_count(scores, threshold: float) -> int:
    """Number of confidence scores strictly above the threshold."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must be in [0, 1], got {threshold}")
    scores = np.asarray(getattr(scores, "data", scores), dtype=np.float64)
    return int((scores > threshold).sum())


def density_count(density) -> float:
    """Total mass of a density map (its entrywise sum), unrounded."""
    d = np.asarray(getattr(density, "data", density), dtype=np.float64)
    return float(d.sum())


def histogram_counts(gt_counts) -> tuple[int, int, int, int]:
    bins = [0, 0, 0, 0]
    for g in gt_counts:
        if g <= HISTOGRAM_EDGES[0]:
            bins[0] += 1
        elif g <= HISTOGRAM_EDGES[1]:
            bins[1] += 1
        elif g <= HISTOGRAM_EDGES[2]:
            bins[2] += 1
        else:
            bins[3] += 1
    return tuple(bins)


def evaluate(pred_counts, gt_counts) -> CountReport:
    preds = np.asarray(pred_counts, dtype=np.float64).reshape(-1)
    gts = np.asarray(gt_counts, dtype=np.float64).reshape(-1)
    if preds.size != gts.size:
        raise ValueError(
            f"{preds.size} predictions vs {gts.size} ground truths")
    if preds.size == 0:
        raise ValueError("evaluate requires at least one image")
    err = np.abs(preds - gts)
    mae = float(err.mean())
    mse = float(math.sqrt((err * err).mean()))
    nonzero = gts > 0
    skipped = int((~nonzero).sum())
    nae = float((err[nonzero] / gts[nonzero]).mean()) if nonzero.any() else 0.0
    return CountReport(mae=mae, mse=mse, nae=nae,
                       images_evaluated=int(gts.size),
                       images_skipped_nae=skipped,
                       histogram=histogram_counts(gts.tolist()))
