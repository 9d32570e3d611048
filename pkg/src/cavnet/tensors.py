"""Shaped, validated float64 arrays: the carrier type for all network inputs."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Tensor:
    """A shaped array of finite reals, stored flat in row-major order."""

    shape: tuple[int, ...]
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        shape = tuple(int(d) for d in self.shape)
        if any(d <= 0 for d in shape):
            raise ValueError(f"dimensions must be positive, got {shape}")
        data = np.ascontiguousarray(self.data, dtype=np.float64).ravel()
        if data.size != math.prod(shape):
            raise ValueError(
                f"data length {data.size} does not match shape {shape}"
            )
        if not np.all(np.isfinite(data)):
            raise ValueError("tensor entries must be finite")
        data.setflags(write=False)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "data", data)

    @classmethod
    def from_array(cls, a) -> "Tensor":
        a = np.asarray(a, dtype=np.float64)
        return cls(a.shape if a.shape else (1,), a.ravel())

    @property
    def array(self) -> np.ndarray:
        """Read-only view of the data in its declared shape."""
        return self.data.reshape(self.shape)

    @property
    def size(self) -> int:
        return self.data.size

    def __array__(self, dtype=None, copy=None):
        arr = self.data.reshape(self.shape)
        if dtype is not None:
            arr = arr.astype(dtype)
        return arr


def as_array(x, shape: tuple[int, ...] | None = None) -> np.ndarray:
    """Coerce a Tensor or array-like into a validated float64 ndarray.

    When `shape` is given, the input must match it exactly (a flat vector of
    the right length is also accepted and reshaped).
    """
    if isinstance(x, Tensor):
        a = x.array
    else:
        a = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise ValueError("input entries must be finite")
    if shape is not None:
        if a.shape == shape:
            return a
        if a.ndim == 1 and a.size == math.prod(shape):
            return a.reshape(shape)
        raise ValueError(f"input shape {a.shape} does not match expected {shape}")
    return a
