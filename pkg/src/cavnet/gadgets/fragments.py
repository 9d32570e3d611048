"""Exact ReLU fragments for Boolean and comparison functions.

Every constructor takes the positive distance floor `gap` of the grid its
inputs live on (points closer than `gap` are considered identical). On such
grid points the fragments reproduce their defining truth tables exactly.

The default gap is 1/256: a valid floor for data quantized to the 1/255
grid of 8-bit images, and exactly representable in binary floating point so
that gadget arithmetic on dyadic grid points has no rounding error at all.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .builder import CircuitBuilder, Expr, apply_dense_relu_stack

DEFAULT_GAP = 1.0 / 256.0

__all__ = [
    "DEFAULT_GAP",
    "NetFragment",
    "Gadgets",
    "gadget",
    "fragment_from",
]


@dataclass(frozen=True)
class NetFragment:
    """A Dense/Relu layer block with scalar arities and its assumed gap."""

    name: str
    layers: tuple
    in_arity: int
    out_arity: int
    gap: float

    def eval(self, xs) -> np.ndarray:
        """Evaluate on an array whose last axis has length in_arity."""
        x = np.asarray(xs, dtype=np.float64)
        if x.ndim == 1 and self.in_arity == 1:
            x = x[:, None]
        if x.shape[-1] != self.in_arity:
            raise ValueError(f"{self.name} expects {self.in_arity} inputs")
        flat = x.reshape(-1, self.in_arity)
        out = apply_dense_relu_stack(self.layers, flat)
        return out.reshape(x.shape[:-1] + (self.out_arity,))

    def __call__(self, *values: float) -> float:
        out = self.eval(np.asarray(values, dtype=np.float64)[None, :])
        return float(out[0, 0]) if self.out_arity == 1 else out[0]

    def then(self, other: "NetFragment") -> "NetFragment":
        """Feed this fragment's outputs into `other` (no weight merging)."""
        if self.out_arity != other.in_arity:
            raise ValueError(
                f"cannot compose {self.name} ({self.out_arity} outs) "
                f"with {other.name} ({other.in_arity} ins)"
            )
        return NetFragment(
            f"{other.name}({self.name})",
            self.layers + other.layers,
            self.in_arity,
            other.out_arity,
            min(self.gap, other.gap),
        )


class Gadgets:
    """Gadget formulas over a CircuitBuilder, parameterized by the grid gap.

    step0(x) is 0 for x <= 0 and 1 for x >= gap; step1(x) is 0 for
    x <= -gap and 1 for x >= 0. On a grid with distance floor `gap` these
    realize the strict/weak threshold tests exactly.
    """

    def __init__(self, builder: CircuitBuilder, gap: float = DEFAULT_GAP):
        if not gap > 0:
            raise ValueError("gap must be positive")
        self.b = builder
        self.gap = gap

    def step0(self, x: Expr) -> Expr:
        r = self.b.relu
        return (r(x) - r(x - self.gap)) * (1.0 / self.gap)

    def step1(self, x: Expr) -> Expr:
        r = self.b.relu
        return (r(x + self.gap) - r(x)) * (1.0 / self.gap)

    def not_(self, x: Expr) -> Expr:
        return 1.0 - x

    def and_(self, x: Expr, y: Expr) -> Expr:
        return self.step1(x + y - 2.0)

    def or_(self, x: Expr, y: Expr) -> Expr:
        # step0, not step1: the or of two false inputs must stay 0.
        return self.step0(x + y)

    def if_(self, a: Expr, b: Expr, c: Expr) -> Expr:
        """b when a = 0, c when a = 1."""
        return self.or_(self.and_(self.not_(a), b), self.and_(a, c))

    def max_(self, x: Expr, y: Expr) -> Expr:
        return self.b.relu(x - y) + y

    def min_(self, x: Expr, y: Expr) -> Expr:
        return x - self.b.relu(x - y)

    def abs_(self, x: Expr) -> Expr:
        return self.b.relu(x) + self.b.relu(-x)

    def geq(self, x: Expr, k: float) -> Expr:
        return self.step1(x - k)

    def gt(self, x: Expr, k: float) -> Expr:
        return self.step0(x - k)

    def leq(self, x: Expr, k: float) -> Expr:
        return self.not_(self.gt(x, k))

    def lt(self, x: Expr, k: float) -> Expr:
        return self.not_(self.geq(x, k))

    def eq(self, x: Expr, k: float) -> Expr:
        return self.and_(self.geq(x, k), self.leq(x, k))

    def open_(self, x: Expr, a: float, b: float) -> Expr:
        """1 iff x lies in the open interval (a, b)."""
        return self.and_(self.gt(x, a), self.lt(x, b))

    def _chain(self, op, values) -> Expr:
        values = list(values)
        if not values:
            raise ValueError("chain needs at least one value")
        acc = values[0]
        for v in values[1:]:
            acc = op(acc, v)
        return acc

    def and_all(self, values) -> Expr:
        return self._chain(self.and_, values)

    def or_all(self, values) -> Expr:
        return self._chain(self.or_, values)

    def max_all(self, values) -> Expr:
        return self._chain(self.max_, values)

    def min_all(self, values) -> Expr:
        return self._chain(self.min_, values)


def fragment_from(name, n_inputs, gap, make_outputs) -> NetFragment:
    """Build a fragment by applying `make_outputs(gadgets, inputs)`"""
    builder = CircuitBuilder(n_inputs)
    g = Gadgets(builder, gap)
    outs = make_outputs(g, builder.inputs())
    if isinstance(outs, Expr):
        outs = [outs]
    layers = builder.build(list(outs))
    return NetFragment(name, layers, n_inputs, len(outs), gap)


_UNARY = {
    "step0": lambda g, x: g.step0(x),
    "step1": lambda g, x: g.step1(x),
    "not": lambda g, x: g.not_(x),
}

_BINARY = {
    "and": lambda g, x, y: g.and_(x, y),
    "or": lambda g, x, y: g.or_(x, y),
    "max": lambda g, x, y: g.max_(x, y),
}

_COMPARISONS = {
    "geq": lambda g, x, k: g.geq(x, k),
    "gt": lambda g, x, k: g.gt(x, k),
    "leq": lambda g, x, k: g.leq(x, k),
    "lt": lambda g, x, k: g.lt(x, k),
    "eq": lambda g, x, k: g.eq(x, k),
}

_CHAINS = {
    "and": lambda g, xs: g.and_all(xs),
    "or": lambda g, xs: g.or_all(xs),
    "max": lambda g, xs: g.max_all(xs),
}


def gadget(name: str, gap: float = DEFAULT_GAP, *, k: float = 0.0,
           lo: float = 0.0, hi: float = 1.0, arity: int | None = None) -> NetFragment:
    """Construct a named gadget fragment.

    Comparison gadgets (geq/gt/leq/lt/eq) compare their input against `k`;
    `open` tests membership in (lo, hi); n-ary and/or/max chains are selected
    by passing `arity` > 2 and associate left.
    """
    if not gap > 0:
        raise ValueError("gap must be positive")
    if name in _UNARY and arity in (None, 1):
        return fragment_from(name, 1, gap, lambda g, xs: _UNARY[name](g, xs[0]))
    if name in _BINARY and arity in (None, 2):
        return fragment_from(name, 2, gap, lambda g, xs: _BINARY[name](g, *xs))
    if name in _CHAINS and arity is not None and arity >= 2:
        return fragment_from(
            f"{name}{arity}", arity, gap, lambda g, xs: _CHAINS[name](g, xs)
        )
    if name in _COMPARISONS:
        return fragment_from(
            f"{name}[{k}]", 1, gap, lambda g, xs: _COMPARISONS[name](g, xs[0], k)
        )
    if name == "open":
        return fragment_from(
            f"open[{lo},{hi}]", 1, gap, lambda g, xs: g.open_(xs[0], lo, hi)
        )
    if name == "if":
        return fragment_from("if", 3, gap, lambda g, xs: g.if_(*xs))
    raise ValueError(f"unknown gadget {name!r}")
