"""Dense numerics shared by every layer: activations, initialization and the
finite-difference oracle used to check hand-derived gradients.

Tensors are plain 2-D ``numpy`` arrays with the batch along the rows.
Sequences of tensors are stacked along a leading time axis, so a sequence
of ``T`` batch-by-dim tensors is a ``(T, B, D)`` array.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

DEFAULT_DTYPE = np.float64
INIT_STD = 0.04


class NonFiniteError(FloatingPointError):
    """Raised when a NaN or Inf shows up in a value that must be finite."""


class ShapeError(ValueError):
    """Raised on incompatible tensor shapes."""


def make_rng(seed: int) -> np.random.Generator:
    """Deterministic generator: PCG64 seeded with a 64-bit unsigned integer.

    PCG64 streams are platform independent, so a seed fully determines every
    draw (initialization, dropout masks, shuffles, synthetic data).
    """
    if not 0 <= int(seed) < 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.Generator(np.random.PCG64(int(seed)))


def resolve_dtype(name) -> np.dtype:
    dt = np.dtype(name)
    if dt not in (np.float32, np.float64):
        raise ValueError(f"unsupported dtype {name!r}; use float32 or float64")
    return dt


def check_finite(x: np.ndarray, what: str = "value") -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NonFiniteError(f"non-finite {what}")
    return x


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul dimension mismatch: {a.shape} x {b.shape}")
    return check_finite(a @ b, "matmul output")


def sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form avoids overflow in exp for large |x|
    check_finite(x, "sigmoid input")
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def tanh(x: np.ndarray) -> np.ndarray:
    check_finite(x, "tanh input")
    return np.tanh(x)


def softmax_rows(x: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction."""
    if x.shape[-1] < 1:
        raise ShapeError("softmax needs at least one column")
    check_finite(x, "softmax input")
    z = np.exp(x - x.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def log_softmax_rows(x: np.ndarray) -> np.ndarray:
    check_finite(x, "log-softmax input")
    shifted = x - x.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def gaussian_init(rows: int, cols: int, rng: np.random.Generator,
                  std: float = INIT_STD, dtype=DEFAULT_DTYPE) -> np.ndarray:
    """i.i.d. N(0, std^2) matrix; the default std is 0.04."""
    if rows < 1 or cols < 1:
        raise ShapeError(f"dimensions must be positive, got ({rows}, {cols})")
    return (rng.standard_normal((rows, cols)) * std).astype(dtype, copy=False)


def finite_diff_grad(f: Callable[[np.ndarray], float], x: np.ndarray,
                     h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``x``.

    ``x`` is perturbed in place one coordinate at a time and restored, so it
    may be a view into a larger parameter buffer that ``f`` reads from.
    """
    grad = np.zeros(x.shape, dtype=np.float64)
    flat_idx = np.ndindex(*x.shape)
    for idx in flat_idx:
        orig = x[idx]
        x[idx] = orig + h
        fp = float(f(x))
        x[idx] = orig - h
        fm = float(f(x))
        x[idx] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NonFiniteError(f"non-finite function value at coordinate {idx}")
        grad[idx] = (fp - fm) / (2.0 * h)
    return grad


def rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Norm-wise relative error ``|a - n| / (|a| + |n|)``.

    Returns the absolute difference when both sides vanish, so an exactly
    zero gradient compared against a zero estimate scores 0.
    """
    diff = float(np.linalg.norm(np.asarray(analytic, np.float64) - numeric))
    scale = float(np.linalg.norm(analytic) + np.linalg.norm(numeric))
    if scale < 1e-12:
        return diff
    return diff / scale
