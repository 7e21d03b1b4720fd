"""Assignment of predicted points to ground truth, and the training losses.

The matching cost for ground truth j vs prediction i combines point
distance, prediction confidence (as 1 - score), and the difference of
average k-nearest-neighbor distances computed within each point set. The
optimal injective assignment is found by a shortest-augmenting-path solver
(see :mod:`camocount.kernels`). Losses are autodiff expressions; matching
itself runs on detached values and is not differentiated through.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .tensor import Tensor, as_tensor, clip, gather_rows, log, tabs, tsum


class MatchingInfeasibleError(ValueError):
    """More ground-truth points than predictions; no injective match exists."""


SCORE_EPS = 1e-7  # BCE clamp bound


@dataclass
class MatchWeights:
    w_dist: float = 1.0
    w_score: float = 1.0
    w_knn: float = 1.0
    k: int = 4
    lam: float = 0.5  # density-loss weight in the combined objective

    def validate(self) -> "MatchWeights":
        for name in ("w_dist", "w_score", "w_knn", "lam"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        return self


@dataclass
class Assignment:
    pairs: list[tuple[int, int]]          # (gt index, prediction index)
    unmatched_preds: list[int]

    @property
    def matched_preds(self) -> list[int]:
        return [p for _, p in self.pairs]


def density_loss(density, count: int) -> Tensor:
    """|sum(D) - K|: absolute error of the density map's total mass."""
    if count < 0:
        raise ValueError(f"ground-truth count must be >= 0, got {count}")
    return tabs(tsum(as_tensor(density)) - float(count))


def avg_knn_distance(points: np.ndarray, k: int) -> np.ndarray:
    """Per-point mean Euclidean distance to its min(k, m-1) nearest peers.

    Singleton sets yield 0; empty input yields an empty array.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    m = pts.shape[0]
    if m == 0:
        return np.zeros(0)
    if m == 1:
        return np.zeros(1)
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.sqrt((diff * diff).sum(axis=2))
    np.fill_diagonal(dist, np.inf)
    kk = min(k, m - 1)
    nearest = np.sort(dist, axis=1)[:, :kk]
    return nearest.mean(axis=1)


def build_cost_matrix(pred_points: np.ndarray, pred_scores: np.ndarray,
                      gt_points: np.ndarray,
                      weights: MatchWeights) -> np.ndarray:
    """K x n cost matrix; entry [j, i] prices matching gt j to prediction i."""
    preds = np.asarray(pred_points, dtype=np.float64).reshape(-1, 2)
    scores = np.asarray(pred_scores, dtype=np.float64).reshape(-1)
    gts = np.asarray(gt_points, dtype=np.float64).reshape(-1, 2)
    n, kgt = preds.shape[0], gts.shape[0]
    if n < kgt:
        raise MatchingInfeasibleError(
            f"{kgt} ground-truth points but only {n} predictions")
    diff = gts[:, None, :] - preds[None, :, :]
    dist = np.sqrt((diff * diff).sum(axis=2))
    knn_pred = avg_knn_distance(preds, weights.k)
    knn_gt = avg_knn_distance(gts, weights.k)
    cost = (weights.w_dist * dist
            + weights.w_score * (1.0 - scores)[None, :]
            + weights.w_knn * np.abs(knn_pred[None, :] - knn_gt[:, None]))
    return cost


def hungarian_assign(cost: np.ndarray) -> Assignment:
    """Minimum-total-cost injective map of the K rows into the n columns."""
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise ValueError(f"cost matrix must be 2-D, got shape {cost.shape}")
    kgt, n = cost.shape
    if n < kgt:
        raise MatchingInfeasibleError(
            f"cost matrix has {kgt} rows but only {n} columns")
    if np.isnan(cost).any():
        raise ValueError("cost matrix contains NaN entries")
    if kgt == 0:
        return Assignment(pairs=[], unmatched_preds=list(range(n)))
    col_of_row = kernels.hungarian(cost)
    pairs = [(j, int(col_of_row[j])) for j in range(kgt)]
    taken = set(col_of_row.tolist())
    return Assignment(pairs=pairs,
                      unmatched_preds=[i for i in range(n) if i not in taken])


def match_predictions(pred_points, pred_scores, gt_points,
                      weights: MatchWeights) -> Assignment:
    gts = np.asarray(gt_points, dtype=np.float64).reshape(-1, 2)
    scores = np.asarray(pred_scores, dtype=np.float64).reshape(-1)
    if gts.shape[0] == 0:
        return Assignment(pairs=[], unmatched_preds=list(range(scores.size)))
    return hungarian_assign(
        build_cost_matrix(pred_points, pred_scores, gts, weights))


def classification_loss(scores, assignment: Assignment) -> Tensor:
    """Binary cross-entropy: matched predictions target 1, the rest 0."""
    scores = as_tensor(scores)
    n = scores.shape[0]
    targets = np.zeros(n)
    targets[assignment.matched_preds] = 1.0
    s = clip(scores, SCORE_EPS, 1.0 - SCORE_EPS)
    nll = Tensor(targets) * log(s) + Tensor(1.0 - targets) * log(1.0 - s)
    return tsum(nll) * (-1.0 / n)


def localization_loss(points, gt_points, assignment: Assignment) -> Tensor:
    """Mean L1 distance (|dx| + |dy|) over the matched pairs."""
    if not assignment.pairs:
        return Tensor(0.0)
    points = as_tensor(points)
    gts = np.asarray(gt_points, dtype=np.float64).reshape(-1, 2)
    gt_idx = [j for j, _ in assignment.pairs]
    pred_idx = [i for _, i in assignment.pairs]
    matched = gather_rows(points, pred_idx)
    delta = tabs(matched - Tensor(gts[gt_idx]))
    return tsum(delta) / len(assignment.pairs)


def total_loss(density_term, cls_term, loc_term, lam: float) -> Tensor:
    """lam * density + classification + localization.

    lam == 0 skips the density term entirely so the remaining sum is exact.
    """
    out = as_tensor(cls_term) + as_tensor(loc_term)
    if lam != 0.0:
        out = as_tensor(density_term) * lam + out
    return out
