"""Numpy layers with explicit reverse-mode gradients.

Activations use NHWC layout. Every layer caches what its backward pass
needs during ``forward`` and consumes that cache in ``backward``; calling
``backward`` without a fresh forward raises :class:`StaleTape`.
Parameter gradients are written (not accumulated) into ``layer.grads``.
"""

from __future__ import annotations

import numpy as np

from fringedet.errors import ShapeError, StaleTape


class Layer:
    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._cache = None

    def forward(self, x, training=False):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError

    def _take_cache(self):
        if self._cache is None:
            raise StaleTape(f"{type(self).__name__}.backward called without a recorded forward pass")
        c, self._cache = self._cache, None
        return c

    def zero_upstream(self):
        for k, v in self.params.items():
            self.grads[k] = np.zeros_like(v)

    def __repr__(self):
        return f"{type(self).__name__}()"


class Conv2D(Layer):
    """Stride-1 'same' convolution, kernel ``(k, k, c_in, c_out)``."""

    def __init__(self, c_in, c_out, k=3, rng=None, gain=2.0, dtype=np.float32):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        fan_in = k * k * c_in
        std = np.sqrt(gain / fan_in)
        self.k, self.c_in, self.c_out = k, c_in, c_out
        self.params["W"] = (rng.standard_normal((k, k, c_in, c_out)) * std).astype(dtype)
        self.params["b"] = np.zeros(c_out, dtype=dtype)

    def forward(self, x, training=False):
        n, h, w, c = x.shape
        if c != self.c_in:
            raise ShapeError(f"Conv2D expected {self.c_in} channels, got {c}")
        p = self.k // 2
        xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)))
        W = self.params["W"]
        out = np.empty((n, h, w, self.c_out), dtype=np.result_type(x, W))
        out[...] = self.params["b"]
        flat = out.reshape(-1, self.c_out)
        for i in range(self.k):
            for j in range(self.k):
                flat += xp[:, i:i + h, j:j + w, :].reshape(-1, c) @ W[i, j]
        self._cache = (xp, x.shape)
        return out

    def backward(self, dout):
        xp, shape = self._take_cache()
        n, h, w, c = shape
        W = self.params["W"]
        d2 = dout.reshape(-1, self.c_out)
        dW = np.empty_like(W)
        dxp = np.zeros_like(xp)
        for i in range(self.k):
            for j in range(self.k):
                dW[i, j] = xp[:, i:i + h, j:j + w, :].reshape(-1, c).T @ d2
                dxp[:, i:i + h, j:j + w, :] += (d2 @ W[i, j].T).reshape(n, h, w, c)
        self.grads["W"] = dW
        self.grads["b"] = d2.sum(axis=0)
        p = self.k // 2
        return dxp[:, p:p + h, p:p + w, :]

    def __repr__(self):
        return f"Conv2D({self.c_in}->{self.c_out}, k={self.k})"


class Dense(Layer):
    def __init__(self, n_in, n_out, rng=None, gain=2.0, dtype=np.float32):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.n_in, self.n_out = n_in, n_out
        self.params["W"] = (rng.standard_normal((n_in, n_out)) * np.sqrt(gain / n_in)).astype(dtype)
        self.params["b"] = np.zeros(n_out, dtype=dtype)

    def forward(self, x, training=False):
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ShapeError(f"Dense expected (n, {self.n_in}), got {x.shape}")
        self._cache = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, dout):
        x = self._take_cache()
        self.grads["W"] = x.T @ dout
        self.grads["b"] = dout.sum(axis=0)
        return dout @ self.params["W"].T

    def __repr__(self):
        return f"Dense({self.n_in}->{self.n_out})"


class LeakyReLU(Layer):
    def __init__(self, slope=0.1):
        super().__init__()
        self.slope = slope

    def forward(self, x, training=False):
        pos = x > 0
        self._cache = pos
        return np.where(pos, x, x * self.slope)

    def backward(self, dout):
        pos = self._take_cache()
        return np.where(pos, dout, dout * self.slope)


class MaxPool2(Layer):
    """2x2 max pooling, stride 2 (input sides must be even)."""

    def forward(self, x, training=False):
        n, h, w, c = x.shape
        if h % 2 or w % 2:
            raise ShapeError(f"MaxPool2 needs even spatial size, got {h}x{w}")
        blocks = x.reshape(n, h // 2, 2, w // 2, 2, c).transpose(0, 1, 3, 5, 2, 4).reshape(n, h // 2, w // 2, c, 4)
        idx = blocks.argmax(axis=-1)
        self._cache = (idx, x.shape)
        return np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]

    def backward(self, dout):
        idx, shape = self._take_cache()
        n, h, w, c = shape
        blocks = np.zeros((n, h // 2, w // 2, c, 4), dtype=dout.dtype)
        np.put_along_axis(blocks, idx[..., None], dout[..., None], axis=-1)
        return blocks.reshape(n, h // 2, w // 2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3).reshape(shape)


class AvgPool(Layer):
    """Non-overlapping ``f x f`` average pooling."""

    def __init__(self, factor=2):
        super().__init__()
        self.f = factor

    def forward(self, x, training=False):
        n, h, w, c = x.shape
        f = self.f
        if h % f or w % f:
            raise ShapeError(f"AvgPool({f}) needs sides divisible by {f}, got {h}x{w}")
        self._cache = x.shape
        return x.reshape(n, h // f, f, w // f, f, c).mean(axis=(2, 4))

    def backward(self, dout):
        shape = self._take_cache()
        f = self.f
        g = np.repeat(np.repeat(dout, f, axis=1), f, axis=2) / (f * f)
        return g.reshape(shape)


class Tile(Layer):
    """Repeat a single channel ``copies`` times along the channel axis."""

    def __init__(self, copies=3):
        super().__init__()
        self.copies = copies

    def forward(self, x, training=False):
        if x.shape[-1] != 1:
            raise ShapeError("Tile expects a single-channel input")
        self._cache = True
        return np.repeat(x, self.copies, axis=-1)

    def backward(self, dout):
        self._take_cache()
        return dout.sum(axis=-1, keepdims=True)


class Dropout(Layer):
    """Inverted dropout; the mask stream comes from ``rng`` set by the owner."""

    def __init__(self, rate=0.1):
        super().__init__()
        self.rate = rate
        self.rng = np.random.default_rng(0)

    def forward(self, x, training=False):
        if not training or self.rate == 0:
            self._cache = 1.0
            return x
        keep = (self.rng.random(x.shape) >= self.rate).astype(x.dtype) / (1.0 - self.rate)
        self._cache = keep
        return x * keep

    def backward(self, dout):
        keep = self._take_cache()
        return dout * keep


class Flatten(Layer):
    def forward(self, x, training=False):
        self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._take_cache())


class Standardize(Layer):
    """Per-image, per-channel zero mean and unit variance (no parameters)."""

    eps = 1e-5

    def forward(self, x, training=False):
        mu = x.mean(axis=(1, 2), keepdims=True)
        xc = x - mu
        var = (xc * xc).mean(axis=(1, 2), keepdims=True)
        inv = 1.0 / np.sqrt(var + self.eps)
        y = xc * inv
        self._cache = (y, inv)
        return y

    def backward(self, dout):
        y, inv = self._take_cache()
        m = dout.mean(axis=(1, 2), keepdims=True)
        my = (dout * y).mean(axis=(1, 2), keepdims=True)
        return inv * (dout - m - y * my)


class BatchNorm(Layer):
    """Per-channel batch normalization over N, H, W with running statistics."""

    def __init__(self, channels, momentum=0.9, eps=1e-5, dtype=np.float32):
        super().__init__()
        self.params["gamma"] = np.ones(channels, dtype=dtype)
        self.params["beta"] = np.zeros(channels, dtype=dtype)
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.momentum, self.eps = momentum, eps

    def forward(self, x, training=False):
        axes = tuple(range(x.ndim - 1))
        if training:
            mu = x.mean(axis=axes)
            var = x.var(axis=axes)
            self.running_mean = (self.momentum * self.running_mean + (1 - self.momentum) * mu).astype(self.running_mean.dtype)
            self.running_var = (self.momentum * self.running_var + (1 - self.momentum) * var).astype(self.running_var.dtype)
        else:
            mu, var = self.running_mean, self.running_var
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mu) * inv
        self._cache = (xhat, inv, training)
        return self.params["gamma"] * xhat + self.params["beta"]

    def backward(self, dout):
        xhat, inv, training = self._take_cache()
        axes = tuple(range(dout.ndim - 1))
        self.grads["gamma"] = (dout * xhat).sum(axis=axes)
        self.grads["beta"] = dout.sum(axis=axes)
        g = self.params["gamma"] * inv
        if not training:
            return dout * g
        m = dout.mean(axis=axes)
        my = (dout * xhat).mean(axis=axes)
        return g * (dout - m - xhat * my)


class Sequential(Layer):
    def __init__(self, *layers):
        super().__init__()
        self.layers = list(layers)

    def forward(self, x, training=False):
        for layer in self.layers:
            x = layer.forward(x, training)
        return x

    def backward(self, dout):
        for layer in reversed(self.layers):
            dout = layer.backward(dout)
        return dout

    def children(self):
        return self.layers

    def __repr__(self):
        inner = ", ".join(repr(l) for l in self.layers)
        return f"Sequential({inner})"


class Residual(Layer):
    """Sum of two branches fed the same input."""

    def __init__(self, skip: Layer, path: Layer):
        super().__init__()
        self.skip, self.path = skip, path

    def forward(self, x, training=False):
        a = self.skip.forward(x, training)
        b = self.path.forward(x, training)
        if a.shape != b.shape:
            raise ShapeError(f"residual branches disagree: {a.shape} vs {b.shape}")
        self._cache = True
        return a + b

    def backward(self, dout):
        self._take_cache()
        return self.skip.backward(dout) + self.path.backward(dout)

    def children(self):
        return [self.skip, self.path]


class ExistenceSigmoid(Layer):
    """Logistic squashing of every ``stride``-th output (the existence channel)."""

    def __init__(self, stride=8, offset=0):
        super().__init__()
        self.stride, self.offset = stride, offset

    def forward(self, x, training=False):
        y = x.copy()
        z = x[:, self.offset::self.stride]
        s = 0.5 * (1.0 + np.tanh(0.5 * z))  # overflow-free logistic
        y[:, self.offset::self.stride] = s
        self._cache = s
        return y

    def backward(self, dout):
        s = self._take_cache()
        g = dout.copy()
        g[:, self.offset::self.stride] *= s * (1.0 - s)
        return g


def walk(layer: Layer):
    """Depth-first iterator over a layer tree."""
    yield layer
    children = getattr(layer, "children", None)
    if children is not None:
        for ch in children():
            yield from walk(ch)
