"""Forward and backward kernels for the primitive layers.

Every function here is pure: inputs are never modified, and whatever a
backward pass needs is handed back explicitly (switch indices, a cache
dict). All kernels are single threaded numpy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor_core import ShapeError

KERNELS = ((1, 1), (3, 3), (5, 5))
PADDINGS = ("same", "valid")
BN_MODES = ("width_axis", "channel_axis")
BN_EPSILON = 1e-5
BN_MOMENTUM = 0.99


@dataclass(frozen=True)
class ConvSpec:
    out_channels: int
    kernel: tuple[int, int] = (3, 3)
    padding: str = "same"
    has_bias: bool = True

    def __post_init__(self):
        if self.out_channels < 1:
            raise ValueError("out_channels must be >= 1")
        if tuple(self.kernel) not in KERNELS:
            raise ValueError(f"unsupported kernel {self.kernel}; expected one of {KERNELS}")
        if self.padding not in PADDINGS:
            raise ValueError(f"unknown padding {self.padding!r}")
        if not self.has_bias:
            raise ValueError("convolutions always carry a bias")

    def output_hw(self, h: int, w: int) -> tuple[int, int]:
        kh, kw = self.kernel
        if self.padding == "same":
            return h, w
        if h < kh or w < kw:
            raise ShapeError(f"{h}x{w} input too small for valid {kh}x{kw} convolution")
        return h - kh + 1, w - kw + 1

    def param_count(self, in_channels: int) -> int:
        kh, kw = self.kernel
        return self.out_channels * in_channels * kh * kw + self.out_channels


@dataclass(frozen=True)
class BatchNormSpec:
    mode: str = "width_axis"
    epsilon: float = BN_EPSILON
    momentum: float = BN_MOMENTUM

    def __post_init__(self):
        if self.mode not in BN_MODES:
            raise ValueError(f"unknown batch-norm mode {self.mode!r}")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not 0 < self.momentum < 1:
            raise ValueError("momentum must lie in (0, 1)")

    @property
    def axis(self) -> int:
        return 3 if self.mode == "width_axis" else 1

    def axis_length(self, shape) -> int:
        return shape[self.axis]

    def param_count(self, shape) -> int:
        return 2 * self.axis_length(shape)


# -- convolution -------------------------------------------------------------


def _pad_amounts(kernel, padding):
    kh, kw = kernel
    if padding == "valid":
        return (0, 0), (0, 0)
    # odd overhang puts the extra row/column at the bottom/right
    return ((kh - 1) // 2, kh // 2), ((kw - 1) // 2, kw // 2)


def _check_conv(x, w):
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError("conv2d expects rank-4 input and weights")
    if x.shape[1] != w.shape[1]:
        raise ShapeError(f"input has {x.shape[1]} channels, weights expect {w.shape[1]}")


def _padded(x, kernel, padding):
    (pt, pb), (pl, pr) = _pad_amounts(kernel, padding)
    if pt == pb == pl == pr == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr)))


def _im2col(xp, kh, kw, ho, wo):
    """Padded input -> columns of shape (C*kh*kw, N*ho*wo)."""
    n, c = xp.shape[:2]
    cols = np.empty((c, kh, kw, n, ho, wo), dtype=xp.dtype)
    for u in range(kh):
        for v in range(kw):
            cols[:, u, v] = xp[:, :, u:u + ho, v:v + wo].transpose(1, 0, 2, 3)
    return cols.reshape(c * kh * kw, n * ho * wo)


def _to_nchw(y2, n, ho, wo):
    return np.ascontiguousarray(y2.reshape(-1, n, ho, wo).transpose(1, 0, 2, 3))


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, padding: str = "same") -> np.ndarray:
    """Stride-1 cross-correlation: y[n,o] = b[o] + sum_c w[o,c] * x[n,c]."""
    _check_conv(x, w)
    o, c, kh, kw = w.shape
    ho, wo = ConvSpec(o, (kh, kw), padding).output_hw(*x.shape[2:])
    cols = _im2col(_padded(x, (kh, kw), padding), kh, kw, ho, wo)
    y2 = w.reshape(o, -1) @ cols
    y2 += b.reshape(-1, 1)
    return _to_nchw(y2, x.shape[0], ho, wo).astype(x.dtype, copy=False)


def conv2d_backward(x: np.ndarray, w: np.ndarray, padding: str, dy: np.ndarray):
    """Gradients (dx, dw, db) of :func:`conv2d_forward`."""
    _check_conv(x, w)
    o, c, kh, kw = w.shape
    n = x.shape[0]
    ho, wo = ConvSpec(o, (kh, kw), padding).output_hw(*x.shape[2:])
    if dy.shape != (n, o, ho, wo):
        raise ShapeError(f"dy has shape {dy.shape}, forward output is {(n, o, ho, wo)}")
    xp = _padded(x, (kh, kw), padding)
    cols = _im2col(xp, kh, kw, ho, wo)
    dy2 = dy.transpose(1, 0, 2, 3).reshape(o, -1)
    db = dy2.sum(axis=1)
    dw = (dy2 @ cols.T).reshape(w.shape)
    dcols = (w.reshape(o, -1).T @ dy2).reshape(c, kh, kw, n, ho, wo)
    if (kh, kw) == (1, 1):
        return _to_nchw(dcols.reshape(c, -1), n, ho, wo), dw, db
    # scatter each kernel tap back onto the padded input
    dxp = np.zeros((c, n) + xp.shape[2:], dtype=dy.dtype)
    for u in range(kh):
        for v in range(kw):
            dxp[:, :, u:u + ho, v:v + wo] += dcols[:, u, v]
    (pt, _), (pl, _) = _pad_amounts((kh, kw), padding)
    dx = dxp[:, :, pt:pt + x.shape[2], pl:pl + x.shape[3]].transpose(1, 0, 2, 3)
    return np.ascontiguousarray(dx), dw, db


# -- pooling -----------------------------------------------------------------


def maxpool2x2_forward(x: np.ndarray):
    """Non-overlapping 2x2 max-pool. Odd trailing rows/columns are dropped.

    Returns ``(y, switches)`` where ``switches`` holds the row-major
    position (0..3) of the winning element in each cell, first one on ties.
    """
    n, c, h, w = x.shape
    ho, wo = h // 2, w // 2
    if ho < 1 or wo < 1:
        raise ShapeError(f"cannot max-pool a {h}x{w} map")
    cells = x[:, :, :2 * ho, :2 * wo].reshape(n, c, ho, 2, wo, 2)
    cells = cells.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho, wo, 4)
    switches = cells.argmax(axis=-1).astype(np.uint8)
    y = np.take_along_axis(cells, switches[..., None].astype(np.intp), axis=-1)[..., 0]
    return y, (switches, x.shape)


def maxpool2x2_backward(switches, dy: np.ndarray) -> np.ndarray:
    idx, in_shape = switches
    if idx.shape != dy.shape:
        raise ShapeError(f"switches {idx.shape} do not match dy {dy.shape}")
    n, c, h, w = in_shape
    ho, wo = dy.shape[2:]
    cells = np.zeros((n, c, ho, wo, 4), dtype=dy.dtype)
    np.put_along_axis(cells, idx[..., None].astype(np.intp), dy[..., None], axis=-1)
    cells = cells.reshape(n, c, ho, wo, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, 2 * ho, 2 * wo)
    dx = np.zeros(in_shape, dtype=dy.dtype)
    dx[:, :, :2 * ho, :2 * wo] = cells
    return dx


# -- batch norm --------------------------------------------------------------


def _bn_view(v, axis):
    shape = [1, 1, 1, 1]
    shape[axis] = -1
    return v.reshape(shape)


def _reduce_axes(axis):
    return tuple(a for a in range(4) if a != axis)


def batchnorm_forward(x, gamma, beta, running_mean, running_var, spec: BatchNormSpec, phase: str = "infer"):
    """Normalize ``x`` along ``spec.axis``.

    Returns ``(y, cache)``. In the train phase the cache carries the batch
    statistics; the caller folds them into the running averages with
    :func:`update_running_stats`.
    """
    axis = spec.axis
    if gamma.shape != (x.shape[axis],):
        raise ShapeError(f"{spec.mode} batch norm needs {x.shape[axis]} parameters, got {gamma.shape[0]}")
    if phase == "infer":
        inv = 1.0 / np.sqrt(running_var + spec.epsilon)
        y = _bn_view(gamma * inv, axis) * (x - _bn_view(running_mean, axis)) + _bn_view(beta, axis)
        return y.astype(x.dtype, copy=False), None
    if phase != "train":
        raise ValueError(f"unknown phase {phase!r}")
    red = _reduce_axes(axis)
    mean = x.mean(axis=red)
    var = x.var(axis=red)
    inv = 1.0 / np.sqrt(var + spec.epsilon)
    xhat = (x - _bn_view(mean, axis)) * _bn_view(inv, axis)
    y = _bn_view(gamma, axis) * xhat + _bn_view(beta, axis)
    cache = {"xhat": xhat, "inv": inv, "gamma": gamma, "axis": axis, "mean": mean, "var": var}
    return y.astype(x.dtype, copy=False), cache


def update_running_stats(running_mean, running_var, cache, momentum):
    """Exponential moving averages of the batch statistics (returns new arrays)."""
    m = momentum
    new_mean = m * running_mean + (1 - m) * cache["mean"]
    new_var = m * running_var + (1 - m) * cache["var"]
    return new_mean.astype(running_mean.dtype), new_var.astype(running_var.dtype)


def batchnorm_backward(cache, dy):
    if cache is None:
        raise RuntimeError("batchnorm_backward needs the cache of a train-phase forward")
    xhat, inv, gamma, axis = cache["xhat"], cache["inv"], cache["gamma"], cache["axis"]
    red = _reduce_axes(axis)
    m = dy.size // dy.shape[axis]
    dbeta = dy.sum(axis=red)
    dgamma = (dy * xhat).sum(axis=red)
    dxhat = dy * _bn_view(gamma, axis)
    dx = _bn_view(inv / m, axis) * (
        m * dxhat - _bn_view(dxhat.sum(axis=red), axis) - xhat * _bn_view((dxhat * xhat).sum(axis=red), axis)
    )
    return dx.astype(dy.dtype, copy=False), dgamma, dbeta


# -- activations and heads ----------------------------------------------------


def relu(x):
    return np.maximum(x, x.dtype.type(0))


def relu_backward(x, dy):
    return np.where(x > 0, dy, dy.dtype.type(0))


ACTIVATIONS = {"relu": (relu, relu_backward)}


def global_avg_pool(x):
    return x.mean(axis=(2, 3), keepdims=True)


def global_avg_pool_backward(in_shape, dy):
    h, w = in_shape[2:]
    return np.broadcast_to(dy / (h * w), in_shape).copy()


def softmax(x):
    if x.ndim == 4 and x.shape[2:] != (1, 1):
        raise ShapeError(f"softmax expects spatially reduced input, got {x.shape}")
    z = x - x.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def concat_channels(a, b):
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise ShapeError(f"cannot concatenate {a.shape} and {b.shape} along channels")
    return np.concatenate([a, b], axis=1)


def concat_channels_backward(ca: int, dy):
    return dy[:, :ca], dy[:, ca:]


def dense_forward(x, w, b):
    """Affine map on row-major flattened input; ``w`` has shape (out, in)."""
    flat = x.reshape(x.shape[0], -1)
    if flat.shape[1] != w.shape[1]:
        raise ShapeError(f"dense layer expects {w.shape[1]} inputs, got {flat.shape[1]}")
    return flat @ w.T + b


def dense_backward(x, w, dy):
    flat = x.reshape(x.shape[0], -1)
    dx = (dy @ w).reshape(x.shape)
    return dx, dy.T @ flat, dy.sum(axis=0)
