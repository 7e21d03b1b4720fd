"""Image file I/O: binary PPM natively, PNG via Pillow when installed.

Images travel through the pipeline as float64 (H, W, 3) arrays in [0, 1]
and are quantized to 8-bit on write.
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np


def to_uint8(image: np.ndarray) -> np.ndarray:
    return (np.clip(image, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def write_ppm(path, image: np.ndarray) -> None:
    arr = to_uint8(np.asarray(image))
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) image, got shape {arr.shape}")
    h, w = arr.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(arr.tobytes())


def read_ppm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    # header: magic, width, height, maxval; comments start with '#'
    tokens = []
    pos = 0
    while len(tokens) < 4:
        m = re.match(rb"\s*(#[^\n]*\n|\S+)", raw[pos:])
        if m is None:
            raise ValueError(f"{path}: truncated PPM header")
        pos += m.end()
        tok = m.group(1)
        if not tok.startswith(b"#"):
            tokens.append(tok)
    if tokens[0] != b"P6":
        raise ValueError(f"{path}: not a binary PPM (magic {tokens[0]!r})")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise ValueError(f"{path}: unsupported maxval {maxval}")
    pos += 1  # single whitespace byte separates maxval from pixel data
    if len(raw) - pos < h * w * 3:
        raise ValueError(f"{path}: truncated pixel data")
    data = np.frombuffer(raw, dtype=np.uint8, count=h * w * 3, offset=pos)
    return data.reshape(h, w, 3).astype(np.float64) / 255.0


def _require_pillow():
    try:
        from PIL import Image
    except ImportError as exc:
        raise RuntimeError(
            "PNG support requires pillow; install camocount[png] or use "
            ".ppm files") from exc
    return Image


def write_image(path, image: np.ndarray) -> None:
    path = Path(path)
    if path.suffix.lower() == ".ppm":
        write_ppm(path, image)
        return
    if path.suffix.lower() == ".png":
        Image = _require_pillow()
        Image.fromarray(to_uint8(np.asarray(image)), mode="RGB").save(path)
        return
    raise ValueError(f"unsupported image extension: {path.suffix}")


def read_image(path) -> np.ndarray:
    path = Path(path)
    if path.suffix.lower() == ".ppm":
        return read_ppm(path)
    if path.suffix.lower() == ".png":
        Image = _require_pillow()
        with Image.open(path) as img:
            arr = np.asarray(img.convert("RGB"), dtype=np.float64)
        return arr / 255.0
    raise ValueError(f"unsupported image extension: {path.suffix}")


def image_size(path) -> tuple[int, int]:
    """(width, height) from the file header without decoding pixels."""
    path = Path(path)
    if path.suffix.lower() == ".ppm":
        with open(path, "rb") as fh:
            head = fh.read(256)
        fields = []
        pos = 0
        while len(fields) < 3:
            m = re.match(rb"\s*(#[^\n]*\n|\S+)", head[pos:])
            if m is None:
                raise ValueError(f"{path}: truncated PPM header")
            pos += m.end()
            if not m.group(1).startswith(b"#"):
                fields.append(m.group(1))
        return int(fields[1]), int(fields[2])
    if path.suffix.lower() == ".png":
        Image = _require_pillow()
        with Image.open(path) as img:
            return img.width, img.height
    raise ValueError(f"unsupported image extension: {path.suffix}")


def png_bytes(image: np.ndarray) -> bytes:
    """Encode to PNG in memory (used by the annotation service)."""
    import io

    Image = _require_pillow()
    buf = io.BytesIO()
    Image.fromarray(to_uint8(np.asarray(image)), mode="RGB").save(buf, "PNG")
    return buf.getvalue()
