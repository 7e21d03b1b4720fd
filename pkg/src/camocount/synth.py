"""Deterministic synthetic camouflage scenes with exact point ground truth.

Backgrounds are seeded value-noise octaves; foreground objects are
antialiased ellipses whose fill interpolates between a contrast color and
the local background pixels according to the indiscernibility factor
(0 = high contrast, 1 = statistically identical to the background). The
ground truth is the exact ellipse centers, so generated datasets need no
annotation pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .data import (AnnotationDoc, PointAnnotation, SplitManifest,
                   annotation_path, annotations_dir, images_dir,
                   manifest_path, write_annotations, write_manifest)
from .imageio import write_image


class PlacementError(RuntimeError):
    """Could not place the requested object count under the constraints."""


_PLACEMENT_TRIES = 1000


@dataclass
class SceneSpec:
    width: int = 256
    height: int = 256
    count: int = 20
    indiscernibility: float = 0.5
    radius_range: tuple[float, float] = (3.0, 7.0)
    min_separation: float = 8.0
    seed: int = 0

    def validate(self) -> "SceneSpec":
        if self.width < 8 or self.height < 8:
            raise ValueError(f"scene too small: {self.width}x{self.height}")
        if self.count < 0:
            raise ValueError(f"count must be >= 0, got {self.count}")
        if not 0.0 <= self.indiscernibility <= 1.0:
            raise ValueError(
                f"indiscernibility must be in [0, 1], got "
                f"{self.indiscernibility}")
        r_min, r_max = self.radius_range
        if r_min <= 0 or r_max < r_min:
            raise ValueError(f"bad radius range {self.radius_range}")
        if self.min_separation < 1:
            raise ValueError(
                f"min_separation must be >= 1, got {self.min_separation}")
        if self.count * math.pi * r_min ** 2 > 0.8 * self.width * self.height:
            raise ValueError(
                f"{self.count} objects of radius >= {r_min} cannot fit in "
                f"{self.width}x{self.height} (placeability bound)")
        return self


def _upsample_bilinear(grid: np.ndarray, h: int, w: int) -> np.ndarray:
    gy, gx = grid.shape
    ys = np.linspace(0, gy - 1, h)
    xs = np.linspace(0, gx - 1, w)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, gy - 1)
    x1 = np.minimum(x0 + 1, gx - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    top = grid[y0][:, x0] * (1 - wx) + grid[y0][:, x1] * wx
    bot = grid[y1][:, x0] * (1 - wx) + grid[y1][:, x1] * wx
    return top * (1 - wy) + bot * wy


def _value_noise(rng: np.random.Generator, h: int, w: int,
                 octaves: int = 3, base: int = 4) -> np.ndarray:
    acc = np.zeros((h, w))
    amp, total = 1.0, 0.0
    for o in range(octaves):
        nodes = base * (2 ** o) + 1
        grid = rng.random((nodes, nodes))
        acc += amp * _upsample_bilinear(grid, h, w)
        total += amp
        amp *= 0.5
    return acc / total


def _background(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    base = np.array([0.12, 0.34, 0.44]) + rng.uniform(-0.04, 0.04, size=3)
    shared = _value_noise(rng, h, w, octaves=3)
    chroma = _value_noise(rng, h, w, octaves=2)
    img = np.empty((h, w, 3))
    gains = np.array([0.8, 1.0, 1.1])
    for c in range(3):
        img[..., c] = (base[c] + (shared - 0.5) * 0.30 * gains[c]
                       + (chroma - 0.5) * 0.10)
    return np.clip(img, 0.0, 1.0)


def _place_centers(rng: np.random.Generator, spec: SceneSpec,
                   margin: float) -> np.ndarray:
    lo_x, hi_x = margin, spec.width - margin
    lo_y, hi_y = margin, spec.height - margin
    if hi_x <= lo_x or hi_y <= lo_y:
        raise PlacementError(
            f"objects of radius up to {margin:.1f} cannot fit inside "
            f"{spec.width}x{spec.height}")
    centers: list[tuple[float, float]] = []
    for i in range(spec.count):
        for _ in range(_PLACEMENT_TRIES):
            x = rng.uniform(lo_x, hi_x)
            y = rng.uniform(lo_y, hi_y)
            if all((x - cx) ** 2 + (y - cy) ** 2 >= spec.min_separation ** 2
                   for cx, cy in centers):
                centers.append((x, y))
                break
        else:
            raise PlacementError(
                f"failed to place object {i + 1}/{spec.count} after "
                f"{_PLACEMENT_TRIES} attempts (min_separation="
                f"{spec.min_separation})")
    return np.array(centers, dtype=np.float64).reshape(-1, 2)


def generate_scene(spec: SceneSpec) -> tuple[np.ndarray, np.ndarray]:
    """Render one scene; returns (image (H,W,3) in [0,1], centers (N,2)).

    Background, placement, and blob appearance consume independent spawned
    random streams, so two specs differing only in ``count`` share an
    identical background.
    """
    spec.validate()
    bg_rng, place_rng, paint_rng = np.random.default_rng(spec.seed).spawn(3)
    img = _background(bg_rng, spec.height, spec.width)
    r_min, r_max = spec.radius_range
    centers = _place_centers(place_rng, spec, margin=r_max + 1.0)
    contrast = np.clip(1.0 - np.median(img.reshape(-1, 3), axis=0)
                       + paint_rng.uniform(-0.05, 0.05, size=3), 0.0, 1.0)
    ind = spec.indiscernibility
    for cx, cy in centers:
        a = paint_rng.uniform(r_min, r_max)
        b = paint_rng.uniform(r_min, r_max)
        theta = paint_rng.uniform(0.0, math.pi)
        jitter = paint_rng.uniform(-0.03, 0.03, size=3)
        r_box = int(math.ceil(max(a, b))) + 1
        y0, y1 = max(0, int(cy) - r_box), min(spec.height, int(cy) + r_box + 1)
        x0, x1 = max(0, int(cx) - r_box), min(spec.width, int(cx) + r_box + 1)
        yy, xx = np.mgrid[y0:y1, x0:x1]
        dx, dy = xx - cx, yy - cy
        ct, st = math.cos(theta), math.sin(theta)
        rho = np.sqrt(((dx * ct + dy * st) / a) ** 2
                      + ((-dx * st + dy * ct) / b) ** 2)
        alpha = np.clip((1.0 - rho) * min(a, b) + 0.5, 0.0, 1.0)[..., None]
        patch = img[y0:y1, x0:x1]
        fg = (1.0 - ind) * np.clip(contrast + jitter, 0, 1) + ind * patch
        img[y0:y1, x0:x1] = alpha * fg + (1.0 - alpha) * patch
    return img, centers


def _stratified_counts(lo: int, hi: int, m: int,
                       rng: np.random.Generator) -> list[int]:
    """Evenly spread counts over [lo, hi] (same distribution in every split)."""
    counts = [lo + round((hi - lo) * (k + 0.5) / m) for k in range(m)]
    rng.shuffle(counts)
    return [int(c) for c in counts]


def generate_split(template: SceneSpec, sizes: dict[str, int], seed: int,
                   out_dir, count_range: tuple[int, int] | None = None,
                   image_format: str = "ppm") -> SplitManifest:
    """Write a full dataset directory (images, annotations, manifest)."""
    for split, m in sizes.items():
        if split not in SplitManifest.SPLITS:
            raise ValueError(f"unknown split {split!r}")
        if m < 1:
            raise ValueError(f"split {split} must have >= 1 image, got {m}")
    out_dir = Path(out_dir)
    images_dir(out_dir).mkdir(parents=True, exist_ok=True)
    annotations_dir(out_dir).mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    manifest = SplitManifest()
    for split in SplitManifest.SPLITS:
        m = sizes.get(split, 0)
        if m == 0:
            continue
        if count_range is None:
            counts = [template.count] * m
        else:
            counts = _stratified_counts(count_range[0], count_range[1], m, rng)
        for i in range(m):
            spec = replace(template, count=counts[i],
                           seed=int(rng.integers(0, 2 ** 63)))
            image, centers = generate_scene(spec)
            name = f"{split}_{i:04d}.{image_format}"
            write_image(images_dir(out_dir) / name, image)
            doc = AnnotationDoc(
                image=name, width=spec.width, height=spec.height,
                points=[PointAnnotation(x=float(x), y=float(y))
                        for x, y in centers])
            write_annotations(doc, annotation_path(out_dir, name))
            manifest.split(split).append(name)
    write_manifest(manifest, manifest_path(out_dir))
    return manifest
