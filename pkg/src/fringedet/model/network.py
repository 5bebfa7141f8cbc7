"""Grid detector network.

Structure, for a square single-channel input of side ``S``::

    standardize
    residual pre-block:  avgpool(2) -> tile to 3 channels        (skip)
                       + conv3 -> lrelu -> maxpool -> conv3 -> lrelu -> conv3(3 ch)
    dropout
    backbone:  [conv3 -> lrelu (-> conv3 -> lrelu) -> maxpool] per stage
    flatten -> [dense(head_width) -> lrelu] -> dense(grid size) -> logistic on p

With ``head_width=0`` the flattened features feed the output layer directly.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np
from PIL import Image

from fringedet.errors import ConfigError, ShapeError
from fringedet.gridcodec import EMPTY_PREDICTOR, GridSpec
from fringedet.model.layers import (
    AvgPool,
    BatchNorm,
    Conv2D,
    Dense,
    Dropout,
    ExistenceSigmoid,
    Flatten,
    LeakyReLU,
    MaxPool2,
    Residual,
    Sequential,
    Standardize,
    Tile,
    walk,
)


@dataclass(frozen=True)
class ModelConfig:
    input_size: int = 64
    pre_channels: tuple = (8, 8)
    stage_channels: tuple = (16, 32, 64)
    convs_per_stage: int = 1
    head_width: int = 512
    dropout_rate: float = 0.1
    weight_decay: float = 1e-4
    leaky_slope: float = 0.1
    batch_norm: bool = False
    head_init_gain: float = 0.01
    rows: int = 6
    cols: int = 6
    predictors_per_cell: int = 2
    vars_per_predictor: int = 8
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        object.__setattr__(self, "pre_channels", tuple(self.pre_channels))
        object.__setattr__(self, "stage_channels", tuple(self.stage_channels))
        div = 2 ** (1 + len(self.stage_channels))
        if self.input_size % div:
            raise ConfigError(f"input_size {self.input_size} must be divisible by {div}")
        if not 0 <= self.dropout_rate < 1:
            raise ConfigError("dropout_rate must lie in [0, 1)")

    @property
    def output_size(self) -> int:
        return self.rows * self.cols * self.predictors_per_cell * self.vars_per_predictor

    @classmethod
    def full_scale(cls, **kw) -> "ModelConfig":
        """Full-size input: 331 px is not pool-divisible, so 336 (= 16 x 21) is used."""
        base = dict(input_size=336, stage_channels=(32, 64, 128), head_width=512)
        base.update(kw)
        return cls(**base)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


class GridDetector:
    """The trainable network plus its flat parameter view."""

    def __init__(self, cfg: ModelConfig = ModelConfig()):
        self.cfg = cfg
        self.dtype = np.dtype(cfg.dtype)
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(0,)))
        gain = 2.0 / (1.0 + cfg.leaky_slope ** 2)
        dt = self.dtype

        def act():
            return LeakyReLU(cfg.leaky_slope)

        def conv(ci, co, g=gain):
            layers = [Conv2D(ci, co, 3, rng=rng, gain=g, dtype=dt)]
            if cfg.batch_norm:
                layers.append(BatchNorm(co, dtype=dt))
            return layers

        c0, c1 = cfg.pre_channels
        path = Sequential(
            *conv(1, c0), act(), MaxPool2(),
            *conv(c0, c1), act(),
            *conv(c1, 3, g=1.0),
        )
        skip = Sequential(AvgPool(2), Tile(3))
        self.dropout = Dropout(cfg.dropout_rate)
        body = [Standardize(), Residual(skip, path), self.dropout]
        ch = 3
        for co in cfg.stage_channels:
            body += conv(ch, co) + [act()]
            for _ in range(cfg.convs_per_stage - 1):
                body += conv(co, co) + [act()]
            body.append(MaxPool2())
            ch = co
        side = cfg.input_size // 2 ** (1 + len(cfg.stage_channels))
        flat = side * side * ch
        head_in = cfg.head_width if cfg.head_width else flat
        self.head = Dense(head_in, cfg.output_size, rng=rng, gain=cfg.head_init_gain, dtype=dt)
        n_pred = cfg.output_size // cfg.vars_per_predictor
        bias = np.tile(EMPTY_PREDICTOR, n_pred).astype(dt)
        bias[0::cfg.vars_per_predictor] = 0.0  # logistic midpoint for existence
        self.head.params["b"] = bias
        body.append(Flatten())
        if cfg.head_width:
            body += [Dense(flat, cfg.head_width, rng=rng, gain=gain, dtype=dt), act()]
        body += [self.head, ExistenceSigmoid(cfg.vars_per_predictor, 0)]
        self.net = Sequential(*body)
        self.dropout.rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(1,)))
        self._named = self._collect()

    def _collect(self):
        named = []
        for i, layer in enumerate(l for l in walk(self.net) if l.params):
            for k in sorted(layer.params):
                named.append((f"{i:02d}.{type(layer).__name__}.{k}", layer, k))
        return named

    # -- parameter views ---------------------------------------------------
    def named_parameters(self):
        return [(name, layer.params[k]) for name, layer, k in self._named]

    def parameter_names(self):
        return [n for n, _, _ in self._named]

    def n_parameters(self) -> int:
        return int(sum(p.size for _, p in self.named_parameters()))

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for _, p in self.named_parameters()])

    def set_flat(self, flat: np.ndarray):
        flat = np.asarray(flat)
        if flat.size != self.n_parameters():
            raise ShapeError(f"expected {self.n_parameters()} parameters, got {flat.size}")
        off = 0
        for _, layer, k in self._named:
            p = layer.params[k]
            layer.params[k] = flat[off:off + p.size].reshape(p.shape).astype(self.dtype)
            off += p.size

    def buffers(self) -> dict:
        """Non-trainable state (batch-norm running statistics)."""
        out = {}
        for i, layer in enumerate(walk(self.net)):
            if isinstance(layer, BatchNorm):
                out[f"{i:02d}.running_mean"] = layer.running_mean
                out[f"{i:02d}.running_var"] = layer.running_var
        return out

    def set_buffers(self, bufs: dict):
        for i, layer in enumerate(walk(self.net)):
            if isinstance(layer, BatchNorm):
                layer.running_mean = np.asarray(bufs[f"{i:02d}.running_mean"], dtype=self.dtype)
                layer.running_var = np.asarray(bufs[f"{i:02d}.running_var"], dtype=self.dtype)

    # -- compute -----------------------------------------------------------
    def prepare(self, images) -> np.ndarray:
        """Stack grayscale frames into a ``(n, S, S, 1)`` batch scaled to [0, 1]."""
        s = self.cfg.input_size
        out = np.empty((len(images), s, s, 1), dtype=self.dtype)
        for i, img in enumerate(images):
            arr = np.asarray(img)
            if arr.ndim == 3 and arr.shape[-1] == 1:
                arr = arr[..., 0]
            if arr.ndim != 2:
                raise ShapeError(f"expected a 2-D grayscale frame, got shape {arr.shape}")
            if arr.dtype == np.uint8:
                arr = arr.astype(np.float64) / 255.0
            if arr.shape != (s, s):
                arr = np.asarray(Image.fromarray(arr.astype(np.float32)).resize((s, s), Image.BILINEAR))
            out[i, :, :, 0] = arr
        return out

    def forward(self, x, training=False) -> np.ndarray:
        x = np.asarray(x)
        s = self.cfg.input_size
        if x.ndim == 3:
            x = x[..., None]
        if x.ndim != 4 or x.shape[1:] != (s, s, 1):
            raise ShapeError(f"expected input batch of shape (n, {s}, {s}, 1), got {x.shape}")
        return self.net.forward(x.astype(self.dtype, copy=False), training)

    def backward(self, dout) -> dict:
        """Propagate ``dL/d(outputs)`` and return ``{name: dL/d(param)}``."""
        dout = np.asarray(dout, dtype=self.dtype)
        self.net.backward(dout)
        return {name: layer.grads[k] for name, layer, k in self._named}

    def flat_grad(self, grads: dict) -> np.ndarray:
        return np.concatenate([grads[n].ravel() for n in self.parameter_names()])

    def grid_spec(self, image_width: int, image_height: int, rings_max: float = 11) -> GridSpec:
        return GridSpec(image_width, image_height, self.cfg.rows, self.cfg.cols,
                        self.cfg.predictors_per_cell, self.cfg.vars_per_predictor, rings_max)

    def summary(self) -> str:
        return json.dumps({"parameters": self.n_parameters(), "layers": repr(self.net)})
