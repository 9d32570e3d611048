"""Symbolic builder that compiles scalar circuits into Dense+Relu stacks.

Expressions are affine combinations of inputs and ReLU unit outputs. The
builder tracks one unit per distinct ReLU argument and emits explicit Dense
and Relu layers, so downstream consumers (forward engine, bound propagation,
big-M encoding) need no new layer kinds.

Inputs that must survive past a Relu layer are carried as split pairs
(ReLU(x), ReLU(-x)), which is exact for arbitrary real inputs; unit outputs
are nonnegative and carry through unchanged. As long as every constant is a
dyadic rational and values stay modest, all emitted arithmetic is exact in
float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..network import Dense, Relu

__all__ = ["Expr", "CircuitBuilder", "apply_dense_relu_stack"]


@dataclass(frozen=True)
class Expr:
    """Affine expression: sum of coeff * signal + const.

    Signal keys are ("in", i) for inputs and ("u", k) for ReLU units.
    """

    terms: tuple
    const: float = 0.0

    @staticmethod
    def _combine(a: "Expr", b: "Expr", sb: float) -> "Expr":
        d = dict(a.terms)
        for k, c in b.terms:
            d[k] = d.get(k, 0.0) + sb * c
            if d[k] == 0.0:
                del d[k]
        return Expr(tuple(sorted(d.items())), a.const + sb * b.const)

    def _coerce(self, other) -> "Expr":
        if isinstance(other, Expr):
            return other
        return Expr((), float(other))

    def __add__(self, other):
        return Expr._combine(self, self._coerce(other), 1.0)

    __radd__ = __add__

    def __sub__(self, other):
        return Expr._combine(self, self._coerce(other), -1.0)

    def __rsub__(self, other):
        return Expr._combine(self._coerce(other), self, -1.0)

    def __mul__(self, c):
        c = float(c)
        if c == 0.0:
            return Expr((), 0.0)
        return Expr(tuple((k, v * c) for k, v in self.terms), self.const * c)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0


class CircuitBuilder:
    """Accumulates ReLU units over n inputs and emits a Dense/Relu stack."""

    def __init__(self, n_inputs: int):
        self.n_inputs = n_inputs
        self._unit_depth: list[int] = []
        self._unit_arg: list[Expr] = []
        self._memo: dict = {}

    def input(self, i: int) -> Expr:
        if not 0 <= i < self.n_inputs:
            raise IndexError(f"input {i} out of range")
        return Expr(((("in", i), 1.0),))

    def inputs(self) -> list[Expr]:
        return [self.input(i) for i in range(self.n_inputs)]

    def const(self, c: float) -> Expr:
        return Expr((), float(c))

    def _depth_of(self, expr: Expr) -> int:
        d = 0
        for (kind, idx), _ in expr.terms:
            if kind == "u":
                d = max(d, self._unit_depth[idx])
        return d

    def relu(self, expr: Expr) -> Expr:
        key = (expr.terms, expr.const)
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        depth = self._depth_of(expr) + 1
        k = len(self._unit_depth)
        self._unit_depth.append(depth)
        self._unit_arg.append(expr)
        out = Expr(((("u", k), 1.0),))
        self._memo[key] = out
        return out

    # -- emission ------------------------------------------------------------

    def build(self, outputs: list[Expr]) -> tuple:
        """Emit [Dense, Relu, ..., Dense] computing `outputs` from the inputs."""
        depth_max = max(self._unit_depth, default=0)

        # Last depth at which each signal is referenced (outputs count as
        # references at depth_max + 1).
        need: dict = {}
        for k, arg in enumerate(self._unit_arg):
            d = self._unit_depth[k]
            for key, _ in arg.terms:
                need[key] = max(need.get(key, 0), d)
        for out in outputs:
            for key, _ in out.terms:
                need[key] = max(need.get(key, 0), depth_max + 1)

        def slots_at(d: int) -> list:
            """Carry slots available at the boundary after `d` Relu layers."""
            if d == 0:
                return [("in", i) for i in range(self.n_inputs)]
            slots = []
            for i in range(self.n_inputs):
                if need.get(("in", i), 0) > d:
                    slots.append(("p", i))
                    slots.append(("m", i))
            for k in range(len(self._unit_depth)):
                if self._unit_depth[k] <= d and need.get(("u", k), 0) > d:
                    slots.append(("u", k))
            return slots

        def translate(expr: Expr, col_of: dict, boundary: int) -> tuple:
            """Expr over raw signals -> (row coefficients, bias) at a boundary."""
            row = np.zeros(len(col_of))
            for (kind, idx), c in expr.terms:
                if kind == "in":
                    if boundary == 0:
                        row[col_of[("in", idx)]] += c
                    else:
                        row[col_of[("p", idx)]] += c
                        row[col_of[("m", idx)]] -= c
                else:
                    row[col_of[("u", idx)]] += c
            return row, expr.const

        layers = []
        prev_slots = slots_at(0)
        prev_cols = {s: j for j, s in enumerate(prev_slots)}
        for d in range(1, depth_max + 1):
            slots = slots_at(d)
            w = np.zeros((len(slots), len(prev_slots)))
            b = np.zeros(len(slots))
            for r, slot in enumerate(slots):
                kind, idx = slot
                if kind == "p":
                    expr = self.input(idx)
                elif kind == "m":
                    expr = -self.input(idx)
                elif self._unit_depth[idx] == d:
                    expr = self._unit_arg[idx]
                else:
                    w[r, prev_cols[("u", idx)]] = 1.0
                    continue
                w[r], b[r] = translate(expr, prev_cols, d - 1)
            layers.append(Dense(w, b))
            layers.append(Relu())
            prev_slots, prev_cols = slots, {s: j for j, s in enumerate(slots)}

        w = np.zeros((len(outputs), len(prev_slots)))
        b = np.zeros(len(outputs))
        for r, out in enumerate(outputs):
            w[r], b[r] = translate(out, prev_cols, depth_max)
        layers.append(Dense(w, b))
        return tuple(layers)


def apply_dense_relu_stack(layers, xs: np.ndarray) -> np.ndarray:
    """Evaluate a flat Dense/Relu stack on a batch (B, n_in) -> (B, n_out)."""
    x = np.asarray(xs, dtype=np.float64)
    for layer in layers:
        if isinstance(layer, Dense):
            x = x @ layer.weights.T + layer.bias
        elif isinstance(layer, Relu):
            x = np.maximum(x, 0.0)
        else:
            raise TypeError(f"unsupported layer in fragment: {layer!r}")
    return x
