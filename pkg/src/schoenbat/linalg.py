"""Dense float64 matrices and reproducible random streams.

Matrices are plain 2-D ``numpy.ndarray`` objects of dtype float64 in C
(row-major) order; :func:`as_matrix` is the validating constructor.
"""
from __future__ import annotations

import numpy as np

from .errors import DimensionError, NonFiniteError

Matrix = np.ndarray


def as_matrix(data, rows=None, cols=None) -> Matrix:
    """Return ``data`` as a finite, C-contiguous float64 matrix.

    A flat sequence is reshaped when ``rows`` and ``cols`` are given.
    """
    arr = np.asarray(data, dtype=np.float64)
    if rows is not None and cols is not None:
        if arr.size != rows * cols:
            raise DimensionError(f"expected {rows * cols} values for a {rows}x{cols} matrix, got {arr.size}")
        arr = arr.reshape(rows, cols)
    if arr.ndim != 2:
        raise DimensionError(f"matrix must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError("matrix contains NaN or Inf entries")
    return np.ascontiguousarray(arr)


class RngStream:
    """Seeded random stream; ``spawn(i)`` gives an independent child stream.

    Streams are keyed by ``(seed, stream ids...)`` through ``numpy.random.SeedSequence``,
    so the same key always replays the same draws.
    """

    def __init__(self, seed: int, stream_id: tuple[int, ...] = ()):
        self.seed = int(seed)
        self.stream_id = tuple(int(s) for s in stream_id)
        seq = np.random.SeedSequence(self.seed, spawn_key=self.stream_id)
        self.generator = np.random.Generator(np.random.PCG64(seq))

    def spawn(self, *stream_id: int) -> "RngStream":
        return RngStream(self.seed, self.stream_id + tuple(stream_id))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


def sample_rademacher(rng: RngStream, d: int, size: int | None = None) -> np.ndarray:
    """Draw i.i.d. uniform +-1 entries: a length-``d`` vector, or ``size`` of them stacked."""
    if d < 1:
        raise DimensionError(f"Rademacher dimension must be >= 1, got {d}")
    shape = (d,) if size is None else (size, d)
    bits = rng.generator.integers(0, 2, size=shape, dtype=np.int8)
    return (2 * bits - 1).astype(np.float64)


def matmul(a: Matrix, b: Matrix) -> Matrix:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply shapes {a.shape} and {b.shape}")
    return a @ b


def outer_accumulate(u, v, acc: Matrix) -> Matrix:
    """Return ``acc + outer(u, v)`` without mutating ``acc``."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    acc = np.asarray(acc, dtype=np.float64)
    if u.ndim != 1 or v.ndim != 1 or acc.shape != (u.size, v.size):
        raise DimensionError(f"outer product {u.shape} x {v.shape} does not fit accumulator {acc.shape}")
    return acc + np.outer(u, v)
