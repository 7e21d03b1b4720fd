"""Dataset formats and geometry: annotations, splits, tiling, augmentation.

A dataset directory looks like::

    root/
      manifest.json          {"train": [...], "val": [...], "test": [...]}
      images/<stem>.ppm
      annotations/<stem>.json

Annotation documents are JSON with explicit fields (image, width, height,
points[{x, y, difficult}]); coordinates are pixels with 0 <= x < width and
0 <= y < height. Writes are atomic (temp file + rename) and canonical, so
write-then-read is identity and repeated writes of equal documents are
byte-identical.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class AnnotationError(ValueError):
    """Malformed or invariant-violating annotation data; carries context."""

    def __init__(self, message: str, field_path: str | None = None):
        super().__init__(message)
        self.field_path = field_path


# ---------------------------------------------------------------------------
# annotation documents
# ---------------------------------------------------------------------------

@dataclass
class PointAnnotation:
    x: float
    y: float
    difficult: bool = False


@dataclass
class AnnotationDoc:
    image: str
    width: int
    height: int
    points: list[PointAnnotation] = field(default_factory=list)

    def validate(self) -> "AnnotationDoc":
        if self.width <= 0 or self.height <= 0:
            raise AnnotationError(
                f"{self.image}: non-positive size {self.width}x{self.height}")
        for i, p in enumerate(self.points):
            if not (0 <= p.x < self.width):
                raise AnnotationError(
                    f"{self.image}: points[{i}].x = {p.x} outside "
                    f"[0, {self.width})", field_path=f"points[{i}].x")
            if not (0 <= p.y < self.height):
                raise AnnotationError(
                    f"{self.image}: points[{i}].y = {p.y} outside "
                    f"[0, {self.height})", field_path=f"points[{i}].y")
        return self

    def points_array(self) -> np.ndarray:
        return np.array([[p.x, p.y] for p in self.points],
                        dtype=np.float64).reshape(-1, 2)

    @property
    def count(self) -> int:
        return len(self.points)

    def to_dict(self) -> dict:
        return {"image": self.image, "width": self.width,
                "height": self.height,
                "points": [{"x": p.x, "y": p.y, "difficult": p.difficult}
                           for p in self.points]}

    @classmethod
    def from_dict(cls, d: dict, source: str = "<dict>") -> "AnnotationDoc":
        def need(obj, key, kind, where):
            if not isinstance(obj, dict) or key not in obj:
                raise AnnotationError(f"{source}: missing field {where}{key}",
                                      field_path=f"{where}{key}")
            value = obj[key]
            if kind is float and isinstance(value, int) \
                    and not isinstance(value, bool):
                value = float(value)
            if not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
                raise AnnotationError(
                    f"{source}: field {where}{key} has type "
                    f"{type(value).__name__}, expected {kind.__name__}",
                    field_path=f"{where}{key}")
            return value

        image = need(d, "image", str, "")
        width = need(d, "width", int, "")
        height = need(d, "height", int, "")
        raw_points = d.get("points", [])
        if not isinstance(raw_points, list):
            raise AnnotationError(f"{source}: field points must be a list")
        points = []
        for i, rp in enumerate(raw_points):
            where = f"points[{i}]."
            points.append(PointAnnotation(
                x=need(rp, "x", float, where),
                y=need(rp, "y", float, where),
                difficult=need(rp, "difficult", bool, where)
                if "difficult" in rp else False))
        return cls(image=image, width=width, height=height,
                   points=points).validate()


def _atomic_write_bytes(path: Path, payload: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def annotation_bytes(doc: AnnotationDoc) -> bytes:
    """Canonical serialized form (stable field order, two-space indent)."""
    return (json.dumps(doc.to_dict(), indent=2) + "\n").encode("utf-8")


def write_annotations(doc: AnnotationDoc, path) -> None:
    doc.validate()
    _atomic_write_bytes(Path(path), annotation_bytes(doc))


def read_annotations(path) -> AnnotationDoc:
    path = Path(path)
    try:
        raw = json.loads(path.read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise AnnotationError(
            f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return AnnotationDoc.from_dict(raw, source=str(path))


# ---------------------------------------------------------------------------
# split manifest
# ---------------------------------------------------------------------------

@dataclass
class SplitManifest:
    train: list[str] = field(default_factory=list)
    val: list[str] = field(default_factory=list)
    test: list[str] = field(default_factory=list)

    SPLITS = ("train", "val", "test")

    def validate(self) -> "SplitManifest":
        seen: dict[str, str] = {}
        for split in self.SPLITS:
            for name in getattr(self, split):
                if name in seen:
                    raise AnnotationError(
                        f"manifest: {name} appears in both {seen[name]} "
                        f"and {split}")
                seen[name] = split
        return self

    def split(self, name: str) -> list[str]:
        if name not in self.SPLITS:
            raise ValueError(f"unknown split {name!r}; expected one of "
                             f"{self.SPLITS}")
        return getattr(self, name)

    def all_files(self) -> list[str]:
        return [*self.train, *self.val, *self.test]


def write_manifest(manifest: SplitManifest, path) -> None:
    manifest.validate()
    payload = json.dumps({s: getattr(manifest, s)
                          for s in SplitManifest.SPLITS}, indent=2) + "\n"
    _atomic_write_bytes(Path(path), payload.encode("utf-8"))


def read_manifest(path) -> SplitManifest:
    raw = json.loads(Path(path).read_text("utf-8"))
    return SplitManifest(train=list(raw.get("train", [])),
                         val=list(raw.get("val", [])),
                         test=list(raw.get("test", []))).validate()


# ---------------------------------------------------------------------------
# dataset directory layout
# ---------------------------------------------------------------------------

def images_dir(root) -> Path:
    return Path(root) / "images"


def annotations_dir(root) -> Path:
    return Path(root) / "annotations"


def manifest_path(root) -> Path:
    return Path(root) / "manifest.json"


def annotation_path(root, image_name: str) -> Path:
    return annotations_dir(root) / (Path(image_name).stem + ".json")


def load_dataset(root) -> tuple[SplitManifest, dict[str, AnnotationDoc]]:
    manifest = read_manifest(manifest_path(root))
    docs = {name: read_annotations(annotation_path(root, name))
            for name in manifest.all_files()}
    return manifest, docs


# ---------------------------------------------------------------------------
# tiling
# ---------------------------------------------------------------------------

@dataclass
class TilePlan:
    width: int           # original extent
    height: int
    padded_width: int
    padded_height: int
    crop: int
    origins: list[tuple[int, int]]   # (x, y), row-major


def plan_tiles(width: int, height: int, crop: int = 256) -> TilePlan:
    """Non-overlapping crop-sized tiles covering the padded image exactly."""
    if width < 1 or height < 1:
        raise ValueError(f"image extents must be >= 1, got {width}x{height}")
    nx = math.ceil(width / crop)
    ny = math.ceil(height / crop)
    origins = [(tx * crop, ty * crop) for ty in range(ny) for tx in range(nx)]
    return TilePlan(width=width, height=height, padded_width=nx * crop,
                    padded_height=ny * crop, crop=crop, origins=origins)


def pad_image(image: np.ndarray, plan: TilePlan) -> np.ndarray:
    h, w = image.shape[:2]
    if (w, h) != (plan.width, plan.height):
        raise ValueError(f"image is {w}x{h}, plan expects "
                         f"{plan.width}x{plan.height}")
    return np.pad(image, ((0, plan.padded_height - h),
                          (0, plan.padded_width - w), (0, 0)),
                  mode="symmetric")


def extract_tile(padded: np.ndarray, origin: tuple[int, int],
                 crop: int) -> np.ndarray:
    x, y = origin
    return padded[y:y + crop, x:x + crop]


@dataclass
class MergedPredictions:
    points: np.ndarray       # (M, 2) global pixel coordinates
    scores: np.ndarray       # (M,)
    dropped_padding: int     # above-threshold points landing in padding

    @property
    def count(self) -> int:
        return int(self.scores.size)


def merge_tile_predictions(tile_outputs, plan: TilePlan,
                           threshold: float) -> MergedPredictions:
    """Combine per-tile scored points into image-space predictions.

    ``tile_outputs`` is an iterable of (origin, scores, points) with points
    in tile-normalized [0, 1]^2. Scores are thresholded per tile (strictly
    greater), then mapped to global pixels; points falling into the
    reflective padding are dropped.
    """
    valid = set(plan.origins)
    all_points, all_scores, dropped = [], [], 0
    for origin, scores, points in tile_outputs:
        origin = (int(origin[0]), int(origin[1]))
        if origin not in valid:
            raise ValueError(f"tile origin {origin} is not part of the plan")
        scores = np.asarray(getattr(scores, "data", scores),
                            dtype=np.float64).reshape(-1)
        points = np.asarray(getattr(points, "data", points),
                            dtype=np.float64).reshape(-1, 2)
        keep = scores > threshold
        pts = points[keep] * plan.crop
        pts[:, 0] += origin[0]
        pts[:, 1] += origin[1]
        inside = (pts[:, 0] < plan.width) & (pts[:, 1] < plan.height)
        dropped += int((~inside).sum())
        all_points.append(pts[inside])
        all_scores.append(scores[keep][inside])
    points = (np.concatenate(all_points) if all_points
              else np.zeros((0, 2)))
    scores = (np.concatenate(all_scores) if all_scores else np.zeros(0))
    return MergedPredictions(points=points, scores=scores,
                             dropped_padding=dropped)


# ---------------------------------------------------------------------------
# augmentation
# ---------------------------------------------------------------------------

@dataclass
class AugmentParams:
    scale_x: float
    scale_y: float
    flipped: bool
    crop_x: int
    crop_y: int
    crop: int
    resized_w: int
    resized_h: int


def resize_image(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize with center-aligned sampling."""
    h, w = image.shape[:2]
    if (out_h, out_w) == (h, w):
        return image.copy()
    ys = np.clip((np.arange(out_h) + 0.5) * h / out_h - 0.5, 0, h - 1)
    xs = np.clip((np.arange(out_w) + 0.5) * w / out_w - 0.5, 0, w - 1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[:, None, None]
    wx = (xs - x0)[None, :, None]
    top = image[y0][:, x0] * (1 - wx) + image[y0][:, x1] * wx
    bot = image[y1][:, x0] * (1 - wx) + image[y1][:, x1] * wx
    return top * (1 - wy) + bot * wy


def sample_augment_params(rng: np.random.Generator, width: int, height: int,
                          crop: int, scale_range: tuple[float, float],
                          flip_prob: float) -> AugmentParams:
    f = float(rng.uniform(*scale_range))
    resized_w = max(crop, round(width * f))
    resized_h = max(crop, round(height * f))
    flipped = bool(rng.random() < flip_prob)
    crop_x = int(rng.integers(0, resized_w - crop + 1))
    crop_y = int(rng.integers(0, resized_h - crop + 1))
    return AugmentParams(scale_x=resized_w / width, scale_y=resized_h / height,
                         flipped=flipped, crop_x=crop_x, crop_y=crop_y,
                         crop=crop, resized_w=resized_w, resized_h=resized_h)


def transform_points(points: np.ndarray, params: AugmentParams
                     ) -> tuple[np.ndarray, np.ndarray]:
    """Map pixel points through resize/flip/crop; returns (points, kept-mask)."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2).copy()
    pts[:, 0] *= params.scale_x
    pts[:, 1] *= params.scale_y
    if params.flipped:
        pts[:, 0] = (params.resized_w - 1) - pts[:, 0]
    pts[:, 0] -= params.crop_x
    pts[:, 1] -= params.crop_y
    keep = ((pts[:, 0] >= 0) & (pts[:, 0] < params.crop)
            & (pts[:, 1] >= 0) & (pts[:, 1] < params.crop))
    return pts[keep], keep


def invert_points(points: np.ndarray, params: AugmentParams) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2).copy()
    pts[:, 0] += params.crop_x
    pts[:, 1] += params.crop_y
    if params.flipped:
        pts[:, 0] = (params.resized_w - 1) - pts[:, 0]
    pts[:, 0] /= params.scale_x
    pts[:, 1] /= params.scale_y
    return pts


def apply_augment(image: np.ndarray, points: np.ndarray,
                  params: AugmentParams) -> tuple[np.ndarray, np.ndarray]:
    img = resize_image(image, params.resized_h, params.resized_w)
    if params.flipped:
        img = img[:, ::-1]
    img = img[params.crop_y:params.crop_y + params.crop,
              params.crop_x:params.crop_x + params.crop]
    pts, _ = transform_points(points, params)
    return np.ascontiguousarray(img), pts


def augment(image: np.ndarray, points: np.ndarray, seed: int,
            crop: int = 256, scale_range: tuple[float, float] = (0.75, 1.25),
            flip_prob: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    """Random resize + horizontal flip + crop, deterministic in the seed."""
    rng = np.random.default_rng(seed)
    params = sample_augment_params(rng, image.shape[1], image.shape[0],
                                   crop, scale_range, flip_prob)
    return apply_augment(image, points, params)


# ---------------------------------------------------------------------------
# statistics
# ---------------------------------------------------------------------------

@dataclass
class DatasetStats:
    images: int
    total_points: int
    min_count: int
    avg_count: float
    max_count: int
    histogram: tuple[int, int, int, int]

    def to_dict(self) -> dict:
        from .metrics import HISTOGRAM_LABELS
        return {"images": self.images, "total_points": self.total_points,
                "min_count": self.min_count, "avg_count": self.avg_count,
                "max_count": self.max_count,
                "histogram": dict(zip(HISTOGRAM_LABELS, self.histogram))}

    def to_text(self) -> str:
        from .metrics import HISTOGRAM_LABELS
        lines = [f"images={self.images}",
                 f"total_points={self.total_points}",
                 f"min_count={self.min_count}",
                 f"avg_count={self.avg_count:.2f}",
                 f"max_count={self.max_count}"]
        lines += [f"histogram[{label}]={n}" for label, n in
                  zip(HISTOGRAM_LABELS, self.histogram)]
        return "\n".join(lines) + "\n"


def dataset_stats(docs) -> DatasetStats:
    from .metrics import histogram_counts

    counts = [doc.count for doc in docs]
    if not counts:
        raise ValueError("dataset_stats requires at least one document")
    return DatasetStats(images=len(counts), total_points=sum(counts),
                        min_count=min(counts),
                        avg_count=sum(counts) / len(counts),
                        max_count=max(counts),
                        histogram=histogram_counts(counts))
