"""Dense NCHW tensors as plain numpy arrays, plus a few checked kernels.

A tensor is any ``numpy.ndarray`` of rank 4 laid out row-major as
(batch, channels, height, width). Storage defaults to float32; the
precision switch in :func:`set_default_dtype` lets gradient checks run
the very same kernels in float64.
"""

from __future__ import annotations

import contextlib

import numpy as np

_INDEX_MAX = np.iinfo(np.intp).max
_DTYPE = np.dtype(np.float32)


class ShapeError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


def default_dtype() -> np.dtype:
    return _DTYPE


def set_default_dtype(dtype) -> None:
    global _DTYPE
    dtype = np.dtype(dtype)
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"unsupported precision {dtype}")
    _DTYPE = dtype


@contextlib.contextmanager
def precision(dtype):
    """Temporarily switch the engine's floating point precision."""
    old = _DTYPE
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(old)


def check_shape(shape) -> tuple[int, int, int, int]:
    dims = tuple(int(d) for d in shape)
    if len(dims) != 4:
        raise ShapeError(f"expected 4 extents (N, C, H, W), got {dims}")
    if any(d < 1 for d in dims):
        raise ShapeError(f"all extents must be >= 1, got {dims}")
    count = 1
    for d in dims:
        count *= d
    if count > _INDEX_MAX:
        raise OverflowError(f"element count of {dims} overflows the index type")
    return dims


def zeros(shape, dtype=None) -> np.ndarray:
    return np.zeros(check_shape(shape), dtype=dtype or _DTYPE)


def flat_offset(shape, n, c, h, w) -> int:
    _, C, H, W = shape
    return ((n * C + c) * H + h) * W + w


_BINARY = {
    "add": np.add,
    "sub": np.subtract,
    "mul": np.multiply,
}


def elementwise(op: str, a: np.ndarray, b=None) -> np.ndarray:
    """Apply ``op`` elementwise and return a new array.

    ``add``/``sub``/``mul`` need equal shapes (no broadcasting),
    ``scale`` takes a scalar and ``max_with_zero`` ignores ``b``.
    """
    a = np.asarray(a)
    if op in _BINARY:
        b = np.asarray(b)
        if a.shape != b.shape:
            raise ShapeError(f"shape mismatch for {op}: {a.shape} vs {b.shape}")
        return _BINARY[op](a, b)
    if op == "scale":
        if np.ndim(b) != 0:
            raise ShapeError("scale expects a scalar factor")
        return a * a.dtype.type(b)
    if op == "max_with_zero":
        return np.maximum(a, a.dtype.type(0))
    raise ValueError(f"unknown elementwise op {op!r}")


def argmax_channel(t: np.ndarray) -> int:
    """Class index of a (1, c, 1, 1) score tensor; ties go to the lowest index."""
    t = np.asarray(t)
    if t.ndim != 4 or t.shape[0] != 1 or t.shape[2:] != (1, 1):
        raise ShapeError(f"expected shape (1, c, 1, 1), got {t.shape}")
    # np.argmax returns the first maximal index
    return int(np.argmax(t[0, :, 0, 0]))


def ensure_finite(x: np.ndarray, where: str = "tensor") -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NonFiniteError(f"non-finite values in {where}")
    return x
