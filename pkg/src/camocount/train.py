"""Training loop, Adam optimizer, and the tiled evaluation/inference paths.

One optimization step draws a batch of images, augments each (when enabled),
runs the model, matches predictions to ground truth, averages the combined
loss over the batch, and applies one Adam update with decoupled weight
decay. Variant routing: the density-only variant trains on the density term
alone; the regression-only variant on classification + localization; the
dual variants on the weighted combination (a zero density weight drops the
term but it is still logged).

Evaluation splits each image into non-overlapping crop-sized tiles over a
reflectively padded canvas. Regression counts come from thresholded merged
points; density counts sum the per-tile maps, excluding cells whose pixel
block centers fall in the padding.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import data as dio
from . import matching, metrics
from .checkpoint import save_checkpoint
from .config import TrainConfig
from .imageio import read_image
from .model import ConfigError, CountingModel
from .tensor import Tensor


class Adam:
    """Adaptive-moment optimizer with decoupled weight decay."""

    def __init__(self, params, lr: float, betas=(0.9, 0.999),
                 eps: float = 1e-8, weight_decay: float = 0.0):
        self.params = list(params)
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        self.t += 1
        bc1 = 1.0 - self.b1 ** self.t
        bc2 = 1.0 - self.b2 ** self.t
        for p, m, v in zip(self.params, self._m, self._v):
            if p.grad is None:
                continue
            g = p.grad
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * (g * g)
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            if self.weight_decay:
                update = update + self.weight_decay * p.data
            p.data = p.data - self.lr * update


@dataclass
class StepLog:
    step: int
    l_d: float
    l_c: float
    l_l: float
    total: float


@dataclass
class TrainResult:
    last_checkpoint: str
    best_checkpoint: str | None
    best_val_mae: float | None
    first_total: float
    final_total: float
    log_path: str


def image_losses(model: CountingModel, image: np.ndarray,
                 gt_points: np.ndarray, cfg: TrainConfig,
                 where: str = "crop"):
    """Forward one crop and build the per-variant loss terms.

    ``gt_points`` are pixels within the crop; matching and localization use
    crop-normalized coordinates. Returns (l_d, l_c, l_l, total) tensors
    (constants where a branch is absent).
    """
    mcfg = model.cfg
    k = gt_points.shape[0]
    if mcfg.has_regression and k >= mcfg.queries:
        raise ConfigError(
            f"{where} has {k} ground-truth points but the model has only "
            f"{mcfg.queries} queries; raise `queries` above the densest crop")
    out = model.forward(image)
    zero = Tensor(0.0)
    l_d = (matching.density_loss(out.density, k)
           if mcfg.has_density else zero)
    if mcfg.has_regression:
        gts_norm = gt_points / mcfg.crop
        asg = matching.match_predictions(out.points.data, out.scores.data,
                                         gts_norm, cfg.match)
        l_c = matching.classification_loss(out.scores, asg)
        l_l = matching.localization_loss(out.points, gts_norm, asg)
    else:
        l_c, l_l = zero, zero
    if mcfg.variant == "density-only":
        total = l_d
    elif mcfg.variant == "regression-only":
        total = l_c + l_l
    else:
        total = matching.total_loss(l_d, l_c, l_l, cfg.match.lam)
    return l_d, l_c, l_l, total


class _ImageCache:
    def __init__(self, root):
        self.root = Path(root)
        self._cache: dict[str, np.ndarray] = {}

    def get(self, name: str) -> np.ndarray:
        if name not in self._cache:
            self._cache[name] = read_image(dio.images_dir(self.root) / name)
        return self._cache[name]


def _train_crop(rng, image, points, cfg: TrainConfig, name: str):
    crop = cfg.model.crop
    h, w = image.shape[:2]
    if cfg.augment:
        params = dio.sample_augment_params(rng, w, h, crop, cfg.scale_range,
                                           cfg.flip_prob)
        img, pts = dio.apply_augment(image, points, params)
        where = f"{name} crop at ({params.crop_x},{params.crop_y})"
    else:
        if (h, w) != (crop, crop):
            raise ConfigError(
                f"{name} is {w}x{h} but augmentation is off and crop is "
                f"{crop}; sizes must match exactly")
        img, pts = image, points
        where = f"{name} full frame"
    return img, pts, where


def train(cfg: TrainConfig, progress=None) -> TrainResult:
    cfg.validate()
    if cfg.dataset_dir is None:
        raise ConfigError("dataset_dir is required for training")
    manifest, docs = dio.load_dataset(cfg.dataset_dir)
    if not manifest.train:
        raise ConfigError(f"{cfg.dataset_dir}: manifest has no train images")
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cache = _ImageCache(cfg.dataset_dir)
    model = CountingModel(cfg.model, seed=cfg.seed)
    opt = Adam(model.parameters(), lr=cfg.lr,
               weight_decay=cfg.weight_decay)
    rng = np.random.default_rng(cfg.seed)
    steps = cfg.steps
    if cfg.epochs is not None:
        steps = cfg.epochs * math.ceil(len(manifest.train) / cfg.batch_size)

    log_path = out_dir / "loss_log.csv"
    last_path = out_dir / "last.ckpt"
    best_path = out_dir / "best.ckpt"
    best_val: float | None = None
    first_total = final_total = float("nan")

    with open(log_path, "w", newline="") as log_file:
        writer = csv.writer(log_file)
        writer.writerow(["step", "l_d", "l_c", "l_l", "total"])
        for step in range(1, steps + 1):
            names = [manifest.train[int(i)] for i in
                     rng.integers(0, len(manifest.train), size=cfg.batch_size)]
            comps = np.zeros(3)
            batch_total = None
            for name in names:
                doc = docs[name]
                img, pts, where = _train_crop(rng, cache.get(name),
                                              doc.points_array(), cfg, name)
                l_d, l_c, l_l, total = image_losses(model, img, pts, cfg,
                                                    where)
                comps += [l_d.item(), l_c.item(), l_l.item()]
                batch_total = total if batch_total is None else batch_total + total
            batch_total = batch_total / cfg.batch_size
            opt.zero_grad()
            batch_total.backward()
            opt.step()
            comps /= cfg.batch_size
            entry = StepLog(step, comps[0], comps[1], comps[2],
                            batch_total.item())
            writer.writerow([entry.step, f"{entry.l_d:.6f}",
                             f"{entry.l_c:.6f}", f"{entry.l_l:.6f}",
                             f"{entry.total:.6f}"])
            if step == 1:
                first_total = entry.total
            final_total = entry.total
            if progress is not None:
                progress(entry)
            at_interval = cfg.eval_interval and step % cfg.eval_interval == 0
            if at_interval or step == steps:
                save_checkpoint(last_path, model, {"step": step})
                if manifest.val and cfg.eval_interval:
                    report = evaluate_split(model, cfg.dataset_dir, "val",
                                            cfg.threshold)
                    if best_val is None or report.mae < best_val:
                        best_val = report.mae
                        save_checkpoint(best_path, model,
                                        {"step": step, "val_mae": best_val,
                                         "best": True})
    return TrainResult(
        last_checkpoint=str(last_path),
        best_checkpoint=str(best_path) if best_val is not None else None,
        best_val_mae=best_val,
        first_total=first_total,
        final_total=final_total,
        log_path=str(log_path))


# ---------------------------------------------------------------------------
# tiled inference and evaluation
# ---------------------------------------------------------------------------

def density_tile_count(density: np.ndarray, origin: tuple[int, int],
                       plan: dio.TilePlan, downsample: int) -> float:
    """Sum of density cells whose pixel-block centers are inside the image."""
    d = np.asarray(getattr(density, "data", density))
    h, w = d.shape
    ox, oy = origin
    cx = ox + (np.arange(w) + 0.5) * downsample
    cy = oy + (np.arange(h) + 0.5) * downsample
    mask = (cy[:, None] < plan.height) & (cx[None, :] < plan.width)
    return float(d[mask].sum())


def predict_image(model: CountingModel, image: np.ndarray,
                  threshold: float):
    """Tile, forward, and merge one image.

    Returns (merged predictions or None, count). Regression variants count
    thresholded merged points; the density-only variant integrates the map.
    """
    cfg = model.cfg
    h, w = image.shape[:2]
    plan = dio.plan_tiles(w, h, cfg.crop)
    padded = dio.pad_image(image, plan)
    outputs = []
    density_total = 0.0
    for origin in plan.origins:
        tile = dio.extract_tile(padded, origin, cfg.crop)
        out = model.forward(tile)
        if cfg.has_regression:
            outputs.append((origin, out.scores.data, out.points.data))
        else:
            density_total += density_tile_count(out.density, origin, plan,
                                                cfg.downsample)
    if cfg.has_regression:
        merged = dio.merge_tile_predictions(outputs, plan, threshold)
        return merged, float(merged.count)
    return None, density_total


def evaluate_split(model: CountingModel, dataset_dir, split: str,
                   threshold: float) -> metrics.CountReport:
    manifest, docs = dio.load_dataset(dataset_dir)
    names = manifest.split(split)
    if not names:
        raise ValueError(f"split {split!r} is empty in "
                         f"{dio.manifest_path(dataset_dir)}")
    cache = _ImageCache(dataset_dir)
    preds, gts = [], []
    for name in names:
        _, count = predict_image(model, cache.get(name), threshold)
        preds.append(count)
        gts.append(docs[name].count)
    return metrics.evaluate(preds, gts)
