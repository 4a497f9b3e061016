"""From-scratch neural network layers with exact analytic backward passes.

All tensors are float64.  Each layer owns its parameters, caches whatever the
exact backward pass needs during ``forward``, and accumulates parameter
gradients into ``grads`` during ``backward``.  ``params()`` and dataclass
field order define the declaration order used by the checkpoint format and
the optimizer.
"""

from __future__ import annotations

import numpy as np

__all__ = ["Dense", "Conv2d", "BatchNorm", "ReLU", "same_pad_amount", "conv_out_shape"]


def same_pad_amount(size: int, kernel: int, stride: int) -> tuple[int, int, int]:
    """SAME-padding bookkeeping for one spatial axis.

    Returns ``(out_size, pad_before, pad_after)`` with
    ``out_size = ceil(size / stride)`` and total padding
    ``max((out_size - 1) * stride + kernel - size, 0)`` split evenly,
    the extra cell (if odd) going after.
    """
    out = -(-size // stride)
    total = max((out - 1) * stride + kernel - size, 0)
    before = total // 2
    return out, before, total - before


def conv_out_shape(in_shape: tuple[int, int], kernel: tuple[int, int], stride: tuple[int, int]) -> tuple[int, int]:
    """Spatial output shape of a SAME-padded convolution."""
    oh, _, _ = same_pad_amount(in_shape[0], kernel[0], stride[0])
    ow, _, _ = same_pad_amount(in_shape[1], kernel[1], stride[1])
    return oh, ow


def _fan_in_uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Dense:
    """Affine map ``y = x @ W + b`` for ``x`` of shape (batch, in_dim)."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator):
        self.W = _fan_in_uniform(rng, in_dim, (in_dim, out_dim))
        self.b = _fan_in_uniform(rng, in_dim, out_dim)
        self.dW = np.zeros_like(self.W)
        self.db = np.zeros_like(self.b)
        self._x = None

    def params(self):
        return [self.W, self.b]

    def grads(self):
        return [self.dW, self.db]

    def forward(self, x: np.ndarray, training: bool) -> np.ndarray:
        self._x = x
        return x @ self.W + self.b

    def backward(self, dy: np.ndarray) -> np.ndarray:
        self.dW += self._x.T @ dy
        self.db += dy.sum(axis=0)
        return dy @ self.W.T


class Conv2d:
    """2-D convolution with SAME padding over (batch, channels, H, W) input."""

    def __init__(
        self,
        in_channels: int,
        filters: int,
        kernel: tuple[int, int],
        stride: tuple[int, int],
        rng: np.random.Generator,
    ):
        kh, kw = kernel
        fan_in = in_channels * kh * kw
        self.W = _fan_in_uniform(rng, fan_in, (filters, in_channels, kh, kw))
        self.b = _fan_in_uniform(rng, fan_in, filters)
        self.stride = (int(stride[0]), int(stride[1]))
        self.dW = np.zeros_like(self.W)
        self.db = np.zeros_like(self.b)
        self._cache = None

    def params(self):
        return [self.W, self.b]

    def grads(self):
        return [self.dW, self.db]

    def forward(self, x: np.ndarray, training: bool) -> np.ndarray:
        N, C, H, Wd = x.shape
        F, _, kh, kw = self.W.shape
        sh, sw = self.stride
        oh, pt, pb = same_pad_amount(H, kh, sh)
        ow, pl, pr = same_pad_amount(Wd, kw, sw)
        xp = np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
        cols = np.empty((N, C, kh, kw, oh, ow))
        for i in range(kh):
            for j in range(kw):
                cols[:, :, i, j] = xp[:, :, i : i + sh * oh : sh, j : j + sw * ow : sw]
        cols2 = cols.reshape(N, C * kh * kw, oh * ow)
        Wm = self.W.reshape(F, -1)
        y = np.tensordot(cols2, Wm, axes=([1], [1]))  # (N, oh*ow, F)
        y = y.transpose(0, 2, 1).reshape(N, F, oh, ow) + self.b[None, :, None, None]
        self._cache = (cols2, xp.shape, (pt, pl), (oh, ow), x.shape)
        return y

    def backward(self, dy: np.ndarray) -> np.ndarray:
        cols2, xp_shape, (pt, pl), (oh, ow), x_shape = self._cache
        N, C, H, Wd = x_shape
        F, _, kh, kw = self.W.shape
        sh, sw = self.stride
        dyf = dy.reshape(N, F, oh * ow)
        self.dW += np.tensordot(dyf, cols2, axes=([0, 2], [0, 2])).reshape(self.W.shape)
        self.db += dy.sum(axis=(0, 2, 3))
        Wm = self.W.reshape(F, -1)
        dcols2 = np.tensordot(dyf, Wm, axes=([1], [0]))  # (N, oh*ow, P)
        dcols = dcols2.transpose(0, 2, 1).reshape(N, C, kh, kw, oh, ow)
        dxp = np.zeros(xp_shape)
        for i in range(kh):
            for j in range(kw):
                dxp[:, :, i : i + sh * oh : sh, j : j + sw * ow : sw] += dcols[:, :, i, j]
        return dxp[:, :, pt : pt + H, pl : pl + Wd]


class BatchNorm:
    """Batch normalization over the feature axis (axis 1).

    Accepts (batch, features) or (batch, channels, H, W) input.  Training
    mode normalizes with biased batch statistics and updates running
    statistics as ``running = momentum * running + (1 - momentum) * batch``;
    inference mode uses the running statistics.  The backward pass is exact
    through the batch statistics.
    """

    def __init__(self, num_features: int, momentum: float = 0.99, eps: float = 1e-5):
        self.gamma = np.ones(num_features)
        self.beta = np.zeros(num_features)
        self.running_mean = np.zeros(num_features)
        self.running_var = np.ones(num_features)
        self.momentum = momentum
        self.eps = eps
        self.dgamma = np.zeros_like(self.gamma)
        self.dbeta = np.zeros_like(self.beta)
        self._cache = None

    def params(self):
        return [self.gamma, self.beta]

    def grads(self):
        return [self.dgamma, self.dbeta]

    def stats(self):
        return [self.running_mean, self.running_var]

    @staticmethod
    def _to2d(x: np.ndarray) -> tuple[np.ndarray, tuple]:
        if x.ndim == 2:
            return x, x.shape
        if x.ndim == 4:
            n, c, h, w = x.shape
            return x.transpose(0, 2, 3, 1).reshape(n * h * w, c), x.shape
        raise ValueError(f"BatchNorm expects 2-D or 4-D input, got {x.ndim}-D")

    @staticmethod
    def _from2d(x2: np.ndarray, shape: tuple) -> np.ndarray:
        if len(shape) == 2:
            return x2
        n, c, h, w = shape
        return x2.reshape(n, h, w, c).transpose(0, 3, 1, 2)

    def forward(self, x: np.ndarray, training: bool) -> np.ndarray:
        x2, shape = self._to2d(x)
        if training:
            mean = x2.mean(axis=0)
            var = x2.var(axis=0)
            m = self.momentum
            self.running_mean[...] = m * self.running_mean + (1.0 - m) * mean
            self.running_var[...] = m * self.running_var + (1.0 - m) * var
        else:
            mean = self.running_mean
            var = self.running_var
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (x2 - mean) * inv
        y2 = self.gamma * xhat + self.beta
        self._cache = (xhat, inv, shape, training)
        return self._from2d(y2, shape)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        xhat, inv, shape, training = self._cache
        dy2, _ = self._to2d(dy)
        self.dgamma += (dy2 * xhat).sum(axis=0)
        self.dbeta += dy2.sum(axis=0)
        dxhat = dy2 * self.gamma
        if training:
            S = dy2.shape[0]
            dx2 = (inv / S) * (
                S * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0)
            )
        else:
            dx2 = dxhat * inv
        return self._from2d(dx2, shape)


class ReLU:
    """Elementwise ``max(x, 0)``."""

    def __init__(self):
        self._mask = None

    def params(self):
        return []

    def grads(self):
        return []

    def forward(self, x: np.ndarray, training: bool) -> np.ndarray:
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return np.where(self._mask, dy, 0.0)
