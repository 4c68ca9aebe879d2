"""Thin, validated wrappers over numpy arrays.

Everything else in the package passes plain ``np.ndarray`` objects around;
this module pins the conventions they share: a single numeric-width switch
(32-bit for training and inference, 64-bit for gradient checking), seeded
construction, no broadcasting, and "non-finite values are an error".
"""
from __future__ import annotations

import sys
from collections.abc import Sequence

import numpy as np

from .errors import NumericError, ShapeError

_WIDTHS = {32: np.float32, 64: np.float64}
_default_width = 32


def set_default_width(bits: int) -> None:
    global _default_width
    if bits not in _WIDTHS:
        raise ValueError(f"numeric width must be 32 or 64, got {bits}")
    _default_width = bits


def default_dtype() -> type:
    return _WIDTHS[_default_width]


def dtype_for(bits: int | None) -> type:
    if bits is None:
        return default_dtype()
    if bits not in _WIDTHS:
        raise ValueError(f"numeric width must be 32 or 64, got {bits}")
    return _WIDTHS[bits]


def width_of(dtype) -> int:
    return np.dtype(dtype).itemsize * 8


def check_shape(shape: Sequence[int]) -> tuple[int, ...]:
    """Validate extents (all >= 1, rank >= 1) and that the element count fits."""
    shape = tuple(int(d) for d in shape)
    if len(shape) == 0:
        raise ShapeError("rank must be >= 1")
    if any(d < 1 for d in shape):
        raise ShapeError(f"every extent must be >= 1, got {shape}")
    count = 1
    for d in shape:
        count *= d
    if count > sys.maxsize:
        raise OverflowError(f"element count of {shape} overflows a platform integer")
    return shape


def zeros(shape: Sequence[int], bits: int | None = None) -> np.ndarray:
    return np.zeros(check_shape(shape), dtype=dtype_for(bits))


def fill(shape: Sequence[int], value: float, bits: int | None = None) -> np.ndarray:
    return np.full(check_shape(shape), value, dtype=dtype_for(bits))


def random_uniform(shape: Sequence[int], seed: int | np.random.Generator, limit: float = 1.0,
                   bits: int | None = None) -> np.ndarray:
    """Uniform draws in ``[-limit, +limit]``, deterministic for a fixed seed."""
    shape = check_shape(shape)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    # draw in float64 so both widths see the same underlying stream
    return rng.uniform(-limit, limit, size=shape).astype(dtype_for(bits))


def _same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape} (no broadcasting)")


def add(a, b):
    a, b = np.asarray(a), np.asarray(b)
    _same_shape(a, b)
    return a + b


def sub(a, b):
    a, b = np.asarray(a), np.asarray(b)
    _same_shape(a, b)
    return a - b


def mul(a, b):
    a, b = np.asarray(a), np.asarray(b)
    _same_shape(a, b)
    return a * b


def scale(a, s: float):
    a = np.asarray(a)
    return a * a.dtype.type(s) if np.issubdtype(a.dtype, np.floating) else a * s


def _nonempty(a) -> np.ndarray:
    a = np.asarray(a)
    if a.size == 0:
        raise ShapeError("reduction over an empty tensor")
    return a


def reduce_sum(a) -> float:
    return float(np.sum(_nonempty(a), dtype=np.float64))


def reduce_mean(a) -> float:
    a = _nonempty(a)
    return reduce_sum(a) / a.size


def reduce_max(a) -> float:
    return float(np.max(_nonempty(a)))


def check_finite(a, what: str = "tensor") -> np.ndarray:
    if not np.all(np.isfinite(a)):
        raise NumericError(f"non-finite values in {what}")
    return a


def flat_index(shape: Sequence[int], index: Sequence[int]) -> int:
    """Row-major (last axis fastest) flat offset of ``index`` in ``shape``."""
    return int(np.ravel_multi_index(tuple(index), tuple(shape), order="C"))
