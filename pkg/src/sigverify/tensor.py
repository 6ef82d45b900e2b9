"""Dense row-major tensors and the seeded RNG used everywhere else.

Values are 32-bit floats in normal operation; every op accepts a ``dtype``
override (64-bit is what the gradient checker runs in). All operations are
pure: inputs are never modified.
"""

from __future__ import annotations

import hashlib
from typing import Iterable, Sequence

import numpy as np

from .errors import ShapeError

DEFAULT_DTYPE = np.float32


class Tensor:
    """A dense array with explicit shape, stored row-major (C order).

    3-D tensors are indexed [channel][row][col]; 2-D are [row][col].
    """

    __slots__ = ("data",)

    def __init__(self, data, dtype=None):
        arr = np.asarray(data, dtype=dtype if dtype is not None else None)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = np.ascontiguousarray(arr)
        if self.data.size == 0:
            raise ShapeError(f"tensor extents must all be >= 1, got shape {self.data.shape}")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def flat(self) -> np.ndarray:
        """The row-major flat value sequence."""
        return self.data.reshape(-1)

    def copy(self) -> "Tensor":
        return Tensor(self.data.copy())

    def astype(self, dtype) -> "Tensor":
        return Tensor(self.data.astype(dtype))

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name})"

    def __eq__(self, other):
        if not isinstance(other, Tensor):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.data, other.data)

    @staticmethod
    def zeros(shape: Sequence[int], dtype=DEFAULT_DTYPE) -> "Tensor":
        return Tensor(np.zeros(tuple(shape), dtype=dtype))

    @staticmethod
    def from_flat(values: Iterable[float], shape: Sequence[int], dtype=DEFAULT_DTYPE) -> "Tensor":
        arr = np.asarray(list(values) if not isinstance(values, np.ndarray) else values, dtype=dtype)
        shape = tuple(shape)
        if arr.size != int(np.prod(shape)):
            raise ShapeError(f"cannot view {arr.size} values as shape {shape}")
        return Tensor(arr.reshape(shape))


class Rng:
    """Deterministic, splittable random source.

    Backed by NumPy's PCG64 bit generator. Child streams are derived by
    hashing (seed, tag) with SHA-256, so the same seed reproduces the same
    sequences on any machine, and independently consumed substreams
    (per-person split draws, per-epoch shuffles) never interfere.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def child(self, tag) -> "Rng":
        """A new independent stream derived from this seed and a tag."""
        digest = hashlib.sha256(f"{self.seed}:{tag}".encode()).digest()
        return Rng(int.from_bytes(digest[:8], "little"))

    def uniform(self, low: float, high: float, shape=None) -> np.ndarray:
        return self._gen.uniform(low, high, size=shape)

    def integers(self, low: int, high: int, shape=None) -> np.ndarray:
        return self._gen.integers(low, high, size=shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice(self, n: int, k: int) -> np.ndarray:
        """k distinct indices drawn uniformly from range(n)."""
        return self._gen.choice(n, size=k, replace=False)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of a 2-D [m,k] tensor with a 2-D [k,n] tensor."""
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner extents disagree: {a.shape} x {b.shape}")
    out = a.data @ b.data
    if not np.isfinite(out).all():
        raise ShapeError(f"matmul produced non-finite values for shapes {a.shape} x {b.shape}")
    return Tensor(out)


def reshape(t: Tensor, new_shape: Sequence[int]) -> Tensor:
    """Same flat data, new shape. Element counts must match."""
    new_shape = tuple(int(s) for s in new_shape)
    if any(s < 1 for s in new_shape):
        raise ShapeError(f"reshape extents must all be >= 1, got {new_shape}")
    if int(np.prod(new_shape)) != t.size:
        raise ShapeError(f"cannot reshape {t.shape} ({t.size} values) to {new_shape} "
                         f"({int(np.prod(new_shape))} values)")
    return Tensor(t.data.reshape(new_shape).copy())


def glorot_init(fan_in: int, fan_out: int, shape: Sequence[int], rng: Rng,
                dtype=DEFAULT_DTYPE) -> Tensor:
    """Uniform init on [-s, s] with s = sqrt(6 / (fan_in + fan_out))."""
    if fan_in < 1 or fan_out < 1:
        raise ShapeError(f"fan_in and fan_out must be >= 1, got {fan_in}, {fan_out}")
    s = float(np.sqrt(6.0 / (fan_in + fan_out)))
    values = rng.uniform(-s, s, tuple(shape)).astype(dtype)
    return Tensor(values)


def argmax(v: Tensor) -> int:
    """Index of the largest value in a 1-D tensor; ties break to the lowest index."""
    if v.data.ndim != 1:
        raise ShapeError(f"argmax needs a 1-D tensor, got shape {v.shape}")
    return int(np.argmax(v.data))
