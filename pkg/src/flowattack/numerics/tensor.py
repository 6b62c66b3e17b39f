"""Dense float32 tensor kernels.

Tensors are plain ``numpy.ndarray`` objects of dtype float32 (row-major).  The
kernels here add the strict shape contract used throughout the package: binary
elementwise ops accept equal shapes or a scalar operand, never general
broadcasting.
"""

import numpy as np

from ..exceptions import ContractError, DomainError

DTYPE = np.float32


def as_tensor(x, dtype=DTYPE):
    return np.asarray(x, dtype=dtype)


def _operands(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim and b.ndim and a.shape != b.shape:
        raise ContractError(f"shape mismatch: {a.shape} vs {b.shape}")
    dtype = np.result_type(a.dtype, b.dtype, DTYPE)
    return a.astype(dtype, copy=False), b.astype(dtype, copy=False)


def add(a, b):
    a, b = _operands(a, b)
    return a + b


def sub(a, b):
    a, b = _operands(a, b)
    return a - b


def mul(a, b):
    a, b = _operands(a, b)
    return a * b


def div(a, b):
    a, b = _operands(a, b)
    return a / b


def scale(a, factor):
    return mul(a, factor)


def exp(a):
    return np.exp(as_tensor(a, np.result_type(np.asarray(a).dtype, DTYPE)))


def ln(a):
    a = np.asarray(a)
    a = a.astype(np.result_type(a.dtype, DTYPE), copy=False)
    if np.any(~(a > 0)):
        raise DomainError("ln requires strictly positive input")
    return np.log(a)


def clip(a, lo, hi):
    a = np.asarray(a)
    return np.clip(a, lo, hi).astype(np.result_type(a.dtype, DTYPE), copy=False)


def tsum(a, axis=None):
    return np.sum(a, axis=axis)


def mean(a, axis=None):
    return np.mean(a, axis=axis)


def matmul(a, b):
    a, b = np.asarray(a), np.asarray(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ContractError(f"matmul shapes not compatible: {a.shape} @ {b.shape}")
    return a @ b


def argmax(a, axis=None):
    """Index of the maximum; ties resolve to the lowest index."""
    # numpy returns the first occurrence, which is the contract we need.
    return np.argmax(a, axis=axis)


def log_softmax(v, axis=-1):
    """Numerically stable ``v - logsumexp(v)`` along ``axis``."""
    v = np.asarray(v)
    if v.shape[axis] < 2:
        raise ContractError("log_softmax needs at least two entries")
    if not np.all(np.isfinite(v)):
        raise DomainError("log_softmax input must be finite")
    shifted = v - np.max(v, axis=axis, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))
