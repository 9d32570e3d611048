"""Distance-floor arithmetic for quantized input spaces.

A space where distinct points are at least `min_gap` apart keeps a positive
floor under sums, nonzero constant scalings and ReLU. These rules let gadget
constructions compute how fine a threshold resolution they may assume after
any composition of those operations.
"""

from __future__ import annotations

from dataclasses import dataclass

__all__ = ["InputSpace", "Space", "Sum", "Scale", "ReluOf", "propagate_min_gap"]


@dataclass(frozen=True)
class InputSpace:
    """A bounded-precision input space of a given dimension.

    `min_gap` is a positive lower bound on the distance between distinct
    points; `repr_bits` (informational) bounds the representation size.
    """

    dimension: int
    min_gap: float
    repr_bits: int | None = None

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        if not self.min_gap > 0:
            raise ValueError("min_gap must be positive")


@dataclass(frozen=True)
class Space:
    """Leaf of a gap expression: a space with a known distance floor."""

    min_gap: float


@dataclass(frozen=True)
class Sum:
    left: object
    right: object


@dataclass(frozen=True)
class Scale:
    alpha: float
    inner: object


@dataclass(frozen=True)
class ReluOf:
    inner: object


def propagate_min_gap(expr, default_gap: float | None = None) -> float:
    """Distance floor of the space produced by a gap expression.

    Rules: sum -> min of the two floors; scaling by alpha -> |alpha| * floor
    (alpha = 0 collapses the floor and is rejected); ReLU -> unchanged.
    Floats are accepted as leaves; `default_gap` substitutes for bare
    InputSpace leaves without an explicit floor.
    """
    if isinstance(expr, (int, float)):
        gap = float(expr)
    elif isinstance(expr, Space):
        gap = expr.min_gap
    elif isinstance(expr, InputSpace):
        gap = expr.min_gap if expr.min_gap else default_gap
    elif isinstance(expr, Sum):
        gap = min(
            propagate_min_gap(expr.left, default_gap),
            propagate_min_gap(expr.right, default_gap),
        )
        return gap
    elif isinstance(expr, Scale):
        if expr.alpha == 0:
            raise ValueError("scaling by 0 collapses the distance floor")
        return abs(expr.alpha) * propagate_min_gap(expr.inner, default_gap)
    elif isinstance(expr, ReluOf):
        return propagate_min_gap(expr.inner, default_gap)
    else:
        raise TypeError(f"not a gap expression: {expr!r}")
    if not gap > 0:
        raise ValueError("distance floor must be positive")
    return gap
