"""Masked per-predictor regression loss and its analytic gradient.

For one predictor with ground truth ``(p, x, y, a, b, c, s, r)``::

    L_j = lp * dp**2
        + p * ( lcenter * (dx**2 + dy**2)
              + lsize   * (da**2 + db**2)
              + langle  * (a - b)**2 * (dc**2 + ds**2)
              + lr      * dr**2 )

The existence term is added (not subtracted): a negated squared error
would make the loss unbounded below. With ``existence_mode="cross_entropy"``
the first term becomes ``-lp * (p log q + (1-p) log(1-q))`` for predicted
existence ``q`` clamped to ``[eps, 1-eps]``.

The total loss of a frame is the mean of ``L_j`` over all predictors; a
batch loss is the mean of the frame losses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fringedet.errors import ConfigError, ShapeError

CE_EPS = 1e-7
N_VARS = 8


@dataclass(frozen=True)
class LossWeights:
    lambda_p: float = 1.0
    lambda_center: float = 1.0
    lambda_size: float = 1.0
    lambda_angle: float = 1.0
    lambda_r: float = 1.0
    existence_mode: str = "squared_error"

    def __post_init__(self):
        for k in ("lambda_p", "lambda_center", "lambda_size", "lambda_angle", "lambda_r"):
            if getattr(self, k) < 0:
                raise ConfigError(f"{k} must be >= 0")
        if self.existence_mode not in ("squared_error", "cross_entropy"):
            raise ConfigError(f"unknown existence_mode {self.existence_mode!r}")

    @classmethod
    def desk(cls, **overrides) -> "LossWeights":
        """Weights for 64-pixel frames.

        Normalized semi-axes are ~0.1 there, so the size term and the
        ``(a - b)**2``-gated angle term are tiny at unit weight and the
        network never learns orientation. These weights bring each term to
        a comparable scale.
        """
        base = dict(lambda_size=20.0, lambda_angle=200.0, lambda_r=2.0)
        base.update(overrides)
        return cls(**base)

    def scaled(self, k: float) -> "LossWeights":
        return LossWeights(
            self.lambda_p * k,
            self.lambda_center * k,
            self.lambda_size * k,
            self.lambda_angle * k,
            self.lambda_r * k,
            self.existence_mode,
        )


def _as_predictors(t):
    t = np.asarray(t, dtype=float)
    if t.shape[-1] % N_VARS:
        raise ShapeError(f"last axis {t.shape[-1]} is not a multiple of {N_VARS}")
    return t.reshape(t.shape[:-1] + (t.shape[-1] // N_VARS, N_VARS))


def _components(truth, pred, w: LossWeights):
    """Per-predictor loss terms, each of shape ``truth.shape[:-1]``."""
    d = pred - truth
    d2 = d * d
    p = truth[..., 0]
    if w.existence_mode == "squared_error":
        exist = w.lambda_p * d2[..., 0]
    else:
        q = np.clip(pred[..., 0], CE_EPS, 1 - CE_EPS)
        exist = -w.lambda_p * (p * np.log(q) + (1 - p) * np.log1p(-q))
    ab2 = (truth[..., 3] - truth[..., 4]) ** 2
    return {
        "existence": exist,
        "center": p * w.lambda_center * (d2[..., 1] + d2[..., 2]),
        "size": p * w.lambda_size * (d2[..., 3] + d2[..., 4]),
        "angle": p * w.lambda_angle * ab2 * (d2[..., 5] + d2[..., 6]),
        "rings": p * w.lambda_r * d2[..., 7],
    }


def loss_per_predictor(truth_j, pred_j, w: LossWeights = LossWeights()) -> float:
    truth_j = np.asarray(truth_j, dtype=float)
    pred_j = np.asarray(pred_j, dtype=float)
    if truth_j.shape != (N_VARS,) or pred_j.shape != (N_VARS,):
        raise ShapeError("a single predictor has exactly 8 values")
    return float(sum(v for v in _components(truth_j, pred_j, w).values()))


def _check(truth, pred):
    truth = np.asarray(truth, dtype=float)
    pred = np.asarray(pred, dtype=float)
    if truth.shape != pred.shape:
        raise ShapeError(f"truth shape {truth.shape} != prediction shape {pred.shape}")
    return _as_predictors(truth), _as_predictors(pred)


def loss_components(truth, pred, w: LossWeights = LossWeights()) -> dict:
    """Mean contribution of each loss term (sums to :func:`total_loss`)."""
    t, p = _check(truth, pred)
    return {k: float(v.mean()) for k, v in _components(t, p, w).items()}


def total_loss(truth, pred, w: LossWeights = LossWeights()) -> float:
    """Mean per-predictor loss; for a batch ``(n, 576)``, the mean over frames too."""
    t, p = _check(truth, pred)
    per = sum(_components(t, p, w).values())
    return float(per.mean())


def loss_gradient(truth, pred, w: LossWeights = LossWeights()) -> np.ndarray:
    """Gradient of :func:`total_loss` with respect to ``pred`` (same shape as ``pred``)."""
    truth_arr = np.asarray(truth, dtype=float)
    t, p = _check(truth, pred)
    n = t.size // N_VARS  # number of predictors across the batch, the mean's divisor
    d = p - t
    mask = t[..., 0]
    g = np.empty_like(d)
    if w.existence_mode == "squared_error":
        g[..., 0] = 2 * w.lambda_p * d[..., 0]
    else:
        raw = p[..., 0]
        q = np.clip(raw, CE_EPS, 1 - CE_EPS)
        inside = (raw > CE_EPS) & (raw < 1 - CE_EPS)
        g[..., 0] = np.where(inside, -w.lambda_p * (mask / q - (1 - mask) / (1 - q)), 0.0)
    g[..., 1:3] = 2 * w.lambda_center * mask[..., None] * d[..., 1:3]
    g[..., 3:5] = 2 * w.lambda_size * mask[..., None] * d[..., 3:5]
    ab2 = (t[..., 3] - t[..., 4]) ** 2
    g[..., 5:7] = 2 * w.lambda_angle * (mask * ab2)[..., None] * d[..., 5:7]
    g[..., 7] = 2 * w.lambda_r * mask * d[..., 7]
    return (g / n).reshape(truth_arr.shape)
