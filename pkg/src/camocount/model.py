"""The dual-branch counting network.

A small convolutional encoder produces a feature map which feeds (depending
on the configured variant) a density branch, a transformer encoder stack,
and a query decoder with confidence/coordinate heads. The stack comes in two
flavors sharing one implementation: the plain variant ("tte") runs the
transformer layers directly, while the density-guided variant ("dete")
additionally merges a chain of convolved density features into the token
stream before every transformer layer.
"""

from __future__ import annotations

import functools
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np

from .nn import (Conv2d, ConvBlock, DecoderLayer, Linear, Module,
                 TransformerLayer)
from .tensor import ShapeError, Tensor, as_tensor, relu, reshape, sigmoid

VARIANTS = ("density-only", "regression-only", "dual-tte", "dual-dete")


class ConfigError(ValueError):
    """A configuration value violates the model or pipeline contract."""


@dataclass
class ModelConfig:
    variant: str = "dual-dete"
    layers: int = 2          # transformer layers in the encoder stack
    c1: int = 64             # image-encoder output channels
    c2: int = 64             # density-branch feature channels
    c: int = 32              # common projected channel width
    queries: int = 128       # decoded point candidates per crop
    decoder_layers: int = 2
    heads: int = 4
    downsample: int = 8
    crop: int = 256          # training/inference tile side, pixels

    def validate(self) -> "ModelConfig":
        if self.variant not in VARIANTS:
            raise ConfigError(
                f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.layers < 2:
            raise ConfigError(f"layers must be >= 2, got {self.layers}")
        if self.queries < 1:
            raise ConfigError(f"queries must be >= 1, got {self.queries}")
        d = self.downsample
        if d < 1 or (d & (d - 1)) != 0:
            raise ConfigError(f"downsample must be a power of 2, got {d}")
        if self.c % self.heads != 0:
            raise ConfigError(
                f"c={self.c} must be divisible by heads={self.heads}")
        if self.c % 2 != 0:
            raise ConfigError(f"c must be even for the position embedding, "
                              f"got {self.c}")
        if self.crop % self.downsample != 0:
            raise ConfigError(
                f"crop={self.crop} must be divisible by "
                f"downsample={self.downsample}")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown model config keys: {unknown}")
        return cls(**d).validate()

    @property
    def has_density(self) -> bool:
        return self.variant != "regression-only"

    @property
    def has_regression(self) -> bool:
        return self.variant != "density-only"


@dataclass
class ModelOutput:
    density: Optional[Tensor] = None   # (h, w), nonnegative
    scores: Optional[Tensor] = None    # (n,), in [0, 1]
    points: Optional[Tensor] = None    # (n, 2), in [0, 1]^2


@functools.lru_cache(maxsize=64)
def _positional_embedding_array(h: int, w: int, c: int) -> np.ndarray:
    cy = c // 2
    cx = c - cy
    ys, xs = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    out = np.empty((h * w, c))
    out[:, :cy] = _axis_encoding(ys.reshape(-1), cy)
    out[:, cy:] = _axis_encoding(xs.reshape(-1), cx)
    out.setflags(write=False)
    return out


def _axis_encoding(pos: np.ndarray, dims: int) -> np.ndarray:
    enc = np.empty((pos.size, dims))
    half = (dims + 1) // 2
    freqs = 1.0 / (10000.0 ** (np.arange(half) / max(half, 1)))
    angles = pos[:, None] * freqs[None, :]
    enc[:, 0::2] = np.sin(angles)[:, : (dims + 1) // 2]
    enc[:, 1::2] = np.cos(angles)[:, : dims // 2]
    return enc


def positional_embedding(h: int, w: int, c: int) -> Tensor:
    """Fixed 2-D sinusoidal embedding, one row per (y, x) position."""
    if c % 2 != 0:
        raise ConfigError(f"position embedding needs an even channel count, "
                          f"got {c}")
    return Tensor(_positional_embedding_array(h, w, c))


class ImageEncoder(Module):
    """Plain conv net with stride-2 stages down to the configured stride."""

    def __init__(self, c1: int, downsample: int, rng: np.random.Generator):
        stages = int(math.log2(downsample)) if downsample > 1 else 0
        chans = [max(8, c1 >> (stages - 1 - i)) for i in range(stages)]
        self.downsample = downsample
        self.stem = []
        cin = 3
        for cout in chans:
            self.stem.append(Conv2d(3, 3, cin, cout, rng, stride=2))
            cin = cout
        self.refine = Conv2d(3, 3, cin, c1, rng)

    def __call__(self, image: Tensor) -> Tensor:
        hh, ww = image.shape[0], image.shape[1]
        if hh % self.downsample or ww % self.downsample:
            raise ShapeError(
                f"image size {hh}x{ww} not divisible by downsample "
                f"{self.downsample}; pad the image first (see tile planning)")
        x = image
        for conv in self.stem:
            x = relu(conv(x))
        return relu(self.refine(x))


class DensityBranch(Module):
    """Two 3x3 convolutions plus a 1x1 ReLU head producing the density map."""

    def __init__(self, c1: int, c2: int, rng: np.random.Generator):
        self.conv1 = Conv2d(3, 3, c1, c2, rng)
        self.conv2 = Conv2d(3, 3, c2, c2, rng)
        self.head = Conv2d(1, 1, c2, 1, rng)
        # start with a slightly positive map so the ReLU head is not dead
        self.head.b.data[:] = 0.1

    def __call__(self, feats: Tensor) -> tuple[Tensor, Tensor]:
        fd = relu(self.conv2(relu(self.conv1(feats))))
        h, w = fd.shape[0], fd.shape[1]
        density = reshape(relu(self.head(fd)), (h, w))
        return fd, density


class EncoderStack(Module):
    """Transformer encoder over flattened features, with optional density
    merges before every layer (the chain of conv blocks has length L-1)."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator,
                 density_merge: bool):
        self.proj_f = Linear(cfg.c1, cfg.c, rng)
        self.trans = [TransformerLayer(cfg.c, cfg.heads, rng)
                      for _ in range(cfg.layers)]
        self.density_merge = density_merge
        if density_merge:
            self.proj_fd = Linear(cfg.c2, cfg.c, rng)
            self.merge_convs = [ConvBlock(cfg.c, cfg.c, rng)
                                for _ in range(cfg.layers - 1)]
        self.c = cfg.c
        self.trans_calls = 0  # instrumentation: transformer-layer invocations

    def _layer(self, i: int, x: Tensor) -> Tensor:
        self.trans_calls += 1
        return self.trans[i](x)

    def tte_forward(self, feats: Tensor) -> Tensor:
        h, w, c1 = feats.shape
        tokens = self.proj_f(reshape(feats, (h * w, c1)))
        x = tokens + positional_embedding(h, w, self.c)
        for i in range(len(self.trans)):
            x = self._layer(i, x)
        return x

    def dete_forward(self, feats: Tensor, density_feats: Tensor) -> Tensor:
        if not self.density_merge:
            raise ConfigError("this stack was built without density merges")
        h, w, c1 = feats.shape
        if density_feats.shape[:2] != (h, w):
            raise ShapeError(
                f"spatial extents differ: features {feats.shape} vs "
                f"density features {density_feats.shape}")
        c2 = density_feats.shape[2]
        tokens = self.proj_f(reshape(feats, (h * w, c1)))
        fd_tokens = self.proj_fd(reshape(density_feats, (h * w, c2)))
        x = tokens + fd_tokens + positional_embedding(h, w, self.c)
        fd_spatial = reshape(fd_tokens, (h, w, self.c))
        x = self._layer(0, x)
        for i in range(1, len(self.trans)):
            fd_spatial = self.merge_convs[i - 1](fd_spatial)
            x = self._layer(i, x + reshape(fd_spatial, (h * w, self.c)))
        return x


class QueryDecoder(Module):
    """Learned queries decoded against the encoder memory, then squashed
    into per-query confidence scores and normalized point coordinates."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.query_embed = Tensor(
            rng.normal(0.0, 0.5, size=(cfg.queries, cfg.c)),
            requires_grad=True)
        self.layers = [DecoderLayer(cfg.c, cfg.heads, rng)
                       for _ in range(cfg.decoder_layers)]
        self.cls_head = Linear(cfg.c, 1, rng)
        self.reg_head = Linear(cfg.c, 2, rng)

    def __call__(self, memory: Tensor) -> tuple[Tensor, Tensor]:
        q = self.query_embed
        for layer in self.layers:
            q = layer(q, memory)
        n = q.shape[0]
        scores = reshape(sigmoid(self.cls_head(q)), (n,))
        points = sigmoid(self.reg_head(q))
        return scores, points


class CountingModel(Module):
    def __init__(self, cfg: ModelConfig, seed: int = 0):
        cfg.validate()
        rng = np.random.default_rng(seed)
        self.cfg = cfg
        self.encoder = ImageEncoder(cfg.c1, cfg.downsample, rng)
        if cfg.has_density:
            self.density_branch = DensityBranch(cfg.c1, cfg.c2, rng)
        if cfg.has_regression:
            self.stack = EncoderStack(cfg, rng,
                                      density_merge=cfg.variant == "dual-dete")
            self.decoder = QueryDecoder(cfg, rng)

    def forward(self, image) -> ModelOutput:
        image = as_tensor(image)
        feats = self.encoder(image)
        out = ModelOutput()
        if self.cfg.has_density:
            fd, out.density = self.density_branch(feats)
        if self.cfg.has_regression:
            if self.cfg.variant == "dual-dete":
                memory = self.stack.dete_forward(feats, fd)
            else:
                memory = self.stack.tte_forward(feats)
            out.scores, out.points = self.decoder(memory)
        return out

    __call__ = forward

    def reset_instrumentation(self) -> None:
        if self.cfg.has_regression:
            self.stack.trans_calls = 0

    @property
    def transformer_layer_calls(self) -> int:
        return self.stack.trans_calls if self.cfg.has_regression else 0
