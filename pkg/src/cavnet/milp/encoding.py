"""Mixed-integer encoding of ReLU networks for exact distance queries.

`interval_bounds` propagates the perturbation box through the layers with
interval arithmetic; `encode_bigM` turns the network into a linear program
plus one binary per unstable ReLU (standard big-M linearization with the
interval bounds), substituting stable neurons affinely so the model size
scales with the number of unstable units.

Models support `refresh(fixings)`: re-propagating bounds under a set of
forced ReLU phases, which both tightens the big-M constants during branch
and bound and lets whole subtrees be pruned by interval reasoning alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from ..network import Conv2d, Dense, Flatten, Network, Relu, conv_derived
from .linprog import LinearProgram

__all__ = ["NeuronBounds", "interval_bounds", "MilpModel", "encode_bigM", "lp_text"]

_STABILITY_TOL = 1e-9


def _layer_matrix(layer, in_shape):
    """Dense-equivalent (matrix, bias) of an affine layer on flat input."""
    if isinstance(layer, Dense):
        return layer.weights, layer.bias
    d = conv_derived(layer, in_shape)
    return d["mat"], np.zeros(d["mat"].shape[0])


@dataclass(frozen=True)
class NeuronBounds:
    """Sound pre-activation intervals for every ReLU layer plus the input box
    and output logit intervals."""

    input_lo: np.ndarray
    input_hi: np.ndarray
    relu_positions: tuple
    pre: tuple  # per relu layer: (lo, hi) flat arrays
    logit_lo: np.ndarray
    logit_hi: np.ndarray

    def pre_bounds(self, relu_pos: int):
        return self.pre[self.relu_positions.index(relu_pos)]


def _infer_input_box(net: Network, lo, hi, fixings):
    """Tighten the input box using fixed phases of first-ReLU-layer units
    whose pre-activation depends on a single input coordinate."""
    if not fixings:
        return lo, hi
    mat = None
    bias = None
    in_shape = net.input_shape
    for pos, layer in enumerate(net.layers):
        if isinstance(layer, Relu):
            break
        if isinstance(layer, Flatten):
            in_shape = layer.out_shape(in_shape)
            continue
        m, b = _layer_matrix(layer, in_shape)
        mat = m if mat is None else m @ mat
        bias = b if bias is None else m @ bias + b
        in_shape = layer.out_shape(in_shape)
    else:
        return lo, hi
    if mat is None:
        return lo, hi
    lo, hi = lo.copy(), hi.copy()
    for (fpos, unit), phase in fixings.items():
        if fpos != pos:
            continue
        row = mat[unit]
        nz = np.flatnonzero(row)
        if nz.size != 1:
            continue
        i = nz[0]
        w, c = row[i], bias[unit]
        thresh = -c / w
        # phase 1: w x + c >= 0 ; phase 0: w x + c <= 0
        wants_ge = (phase == 1) == (w > 0)
        if wants_ge:
            lo[i] = max(lo[i], thresh)
        else:
            hi[i] = min(hi[i], thresh)
    return lo, np.maximum(hi, lo)


def interval_bounds(
    net: Network,
    x,
    eps: float,
    fixings: dict | None = None,
    domain=(0.0, 1.0),
) -> NeuronBounds:
    """Interval propagation through the net from the box B_inf(x, eps)
    intersected with the input domain. Sound by construction; `fixings`
    optionally forces ReLU phases {(relu_layer_index, unit): 0|1}.
    """
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    x0 = np.asarray(x, dtype=np.float64).ravel()
    lo = np.maximum(x0 - eps, domain[0])
    hi = np.minimum(x0 + eps, domain[1])
    lo, hi = _infer_input_box(net, lo, hi, fixings or {})

    cur_lo, cur_hi = lo, hi
    in_shape = net.input_shape
    relu_positions = []
    pre = []
    for pos, layer in enumerate(net.layers):
        if isinstance(layer, Relu):
            relu_positions.append(pos)
            plo, phi = cur_lo.copy(), cur_hi.copy()
            nlo, nhi = np.maximum(plo, 0.0), np.maximum(phi, 0.0)
            if fixings:
                for (fpos, unit), phase in fixings.items():
                    if fpos != pos:
                        continue
                    if phase == 0:
                        nlo[unit] = 0.0
                        nhi[unit] = 0.0
                        phi[unit] = min(phi[unit], 0.0)
                    else:
                        plo[unit] = max(plo[unit], 0.0)
                        nlo[unit] = max(nlo[unit], 0.0)
            pre.append((plo, phi))
            cur_lo, cur_hi = nlo, nhi
        elif isinstance(layer, Flatten):
            in_shape = layer.out_shape(in_shape)
            continue
        else:
            m, b = _layer_matrix(layer, in_shape)
            pos_part = np.maximum(m, 0.0)
            neg_part = np.minimum(m, 0.0)
            new_lo = pos_part @ cur_lo + neg_part @ cur_hi + b
            new_hi = pos_part @ cur_hi + neg_part @ cur_lo + b
            cur_lo, cur_hi = new_lo, new_hi
            in_shape = layer.out_shape(in_shape)
    return NeuronBounds(
        lo, hi, tuple(relu_positions), tuple(pre), cur_lo, cur_hi
    )


def _sparse_layer_matrix(layer, in_shape):
    if isinstance(layer, Dense):
        return sp.csr_matrix(layer.weights), layer.bias
    d = conv_derived(layer, in_shape)
    if "smat" not in d:
        d["smat"] = sp.csr_matrix(d["mat"])
    return d["smat"], np.zeros(d["smat"].shape[0])


@dataclass
class MilpModel:
    """Linear program + binary ReLU indicators + decoding metadata."""

    lp: LinearProgram
    binaries: np.ndarray                 # LP variable indices of the binaries
    binary_neurons: tuple                # (relu_pos, unit) per binary
    n_inputs: int
    d_index: int | None                  # distance variable, None in feasibility mode
    objective: str                       # "distance" | "feasibility"
    target: int
    delta_tie: float
    net: Network = field(repr=False)
    x0: np.ndarray = field(repr=False)
    eps_box: float = 0.0
    fixings: dict = field(default_factory=dict, repr=False)
    bounds: NeuronBounds | None = field(default=None, repr=False)

    def decode(self, solution: np.ndarray) -> np.ndarray:
        """Input tensor (flat) from an LP solution vector."""
        return np.asarray(solution[: self.n_inputs], dtype=np.float64).copy()

    def refresh(self, fixings: dict) -> "MilpModel | None":
        """Re-encode under forced ReLU phases; None if interval reasoning
        already proves the target margin unreachable."""
        return encode_bigM(
            self.net,
            self.x0,
            self.eps_box,
            self.target,
            objective=self.objective,
            delta_tie=self.delta_tie,
            fixings=fixings,
        )


def encode_bigM(
    net: Network,
    x,
    eps_box: float,
    target_class: int,
    objective: str = "distance",
    delta_tie: float = 1e-6,
    fixings: dict | None = None,
    domain=(0.0, 1.0),
) -> MilpModel | None:
    """Big-M encoding of "some point in B_inf(x, eps_box) classifies as
    `target_class`", minimizing the L-inf distance when objective is
    "distance".

    Stable neurons are substituted affinely; each unstable ReLU contributes
    one binary and the standard four big-M facets (y >= 0 via its bound,
    y >= z, y <= z - l(1-a), y <= u a). The class constraint demands the
    target logit beat lower-indexed logits by `delta_tie` and others weakly,
    matching lowest-index argmax ties. Returns None when interval bounds
    alone prove the query infeasible.
    """
    if objective not in ("distance", "feasibility"):
        raise ValueError(f"unknown objective {objective!r}")
    fixings = dict(fixings or {})
    x0 = np.asarray(x, dtype=np.float64).ravel()
    n_in = x0.size
    if not 0 <= target_class < net.n_classes:
        raise ValueError("target class out of range")
    bounds = interval_bounds(net, x0, eps_box, fixings, domain)

    # contradiction between a fixing and the propagated bounds => infeasible
    for (pos, unit), phase in fixings.items():
        plo, phi = bounds.pre_bounds(pos)
        if phase == 1 and phi[unit] < -_STABILITY_TOL:
            return None
        if phase == 0 and plo[unit] > _STABILITY_TOL:
            return None

    # margin reachability by intervals
    needed = np.where(np.arange(net.n_classes) < target_class, delta_tie, 0.0)
    gap_hi = bounds.logit_hi[target_class] - bounds.logit_lo
    gap_hi[target_class] = np.inf
    if np.any(gap_hi < needed - 1e-12):
        return None

    # classify unstable units per relu layer
    unstable: list[tuple[int, int]] = []
    for pos in bounds.relu_positions:
        plo, phi = bounds.pre_bounds(pos)
        for unit in np.flatnonzero((plo < -_STABILITY_TOL) & (phi > _STABILITY_TOL)):
            if (pos, int(unit)) not in fixings:
                unstable.append((pos, int(unit)))
    n_y = len(unstable)
    y_col = {key: i for i, key in enumerate(unstable)}

    has_d = objective == "distance"
    d_index = n_in if has_d else None
    y_base = n_in + (1 if has_d else 0)
    a_base = y_base + n_y
    n_vars = a_base + n_y

    lo = np.empty(n_vars)
    hi = np.empty(n_vars)
    lo[:n_in], hi[:n_in] = bounds.input_lo, bounds.input_hi
    if has_d:
        lo[d_index], hi[d_index] = 0.0, eps_box
    lo[a_base:] = 0.0
    hi[a_base:] = 1.0

    coo_r: list = []
    coo_c: list = []
    coo_v: list = []
    senses: list = []
    rhs: list = []

    def add_row(cols, vals, sense, b):
        r = len(senses)
        coo_r.append(np.full(len(cols), r, dtype=np.intp))
        coo_c.append(np.asarray(cols, dtype=np.intp))
        coo_v.append(np.asarray(vals, dtype=np.float64))
        senses.append(sense)
        rhs.append(b)

    def add_block(Z_csr, y_cols, a_cols, a_coefs, sense, b_vec, z_sign=1.0):
        """Rows  z_sign * Z[i] + y_i + a_coefs[i] * a_i  (sense)  b_vec[i]."""
        r0 = len(senses)
        Z = Z_csr.tocoo()
        coo_r.append(r0 + Z.row)
        coo_c.append(Z.col.astype(np.intp))
        coo_v.append(z_sign * Z.data)
        k = Z_csr.shape[0]
        idx = np.arange(k, dtype=np.intp)
        if y_cols is not None:
            coo_r.append(r0 + idx)
            coo_c.append(np.asarray(y_cols, dtype=np.intp))
            coo_v.append(np.ones(k))
        if a_cols is not None:
            coo_r.append(r0 + idx)
            coo_c.append(np.asarray(a_cols, dtype=np.intp))
            coo_v.append(np.asarray(a_coefs, dtype=np.float64))
        senses.extend([sense] * k)
        rhs.extend(np.asarray(b_vec, dtype=np.float64).tolist())

    if has_d:
        for i in range(n_in):
            add_row([i, d_index], [1.0, -1.0], -1, x0[i])
            add_row([i, d_index], [-1.0, -1.0], -1, -x0[i])

    # affine walk, substituting stable neurons
    expr = sp.identity(n_in, format="csr")
    if n_vars > n_in:
        expr = sp.hstack(
            [expr, sp.csr_matrix((n_in, n_vars - n_in))], format="csr"
        )
    const = np.zeros(n_in)
    in_shape = net.input_shape
    for pos, layer in enumerate(net.layers):
        if isinstance(layer, Flatten):
            in_shape = layer.out_shape(in_shape)
            continue
        if isinstance(layer, (Dense, Conv2d)):
            m, b = _sparse_layer_matrix(layer, in_shape)
            expr = (m @ expr).tocsr()
            const = m @ const + b
            in_shape = layer.out_shape(in_shape)
            continue
        # Relu
        plo, phi = bounds.pre_bounds(pos)
        width = const.size
        keep = np.ones(width)
        new_const = const.copy()
        fixed_on = []
        fixed_off = []
        unstable_units = []
        for unit in range(width):
            key = (pos, unit)
            fixed = fixings.get(key)
            if fixed == 1:
                fixed_on.append(unit)
            elif fixed == 0:
                fixed_off.append(unit)
            elif phi[unit] <= _STABILITY_TOL:
                keep[unit] = 0.0
                new_const[unit] = 0.0
            elif plo[unit] >= -_STABILITY_TOL:
                pass                                # active: expr unchanged
            else:
                unstable_units.append(unit)
        if fixed_on:
            add_block(expr[fixed_on], None, None, None, 1, -const[fixed_on])
        if fixed_off:
            add_block(expr[fixed_off], None, None, None, -1, -const[fixed_off])
            keep[fixed_off] = 0.0
            new_const[fixed_off] = 0.0
        extra = None
        if unstable_units:
            ks = np.array([y_col[(pos, u)] for u in unstable_units], dtype=np.intp)
            yv = y_base + ks
            av = a_base + ks
            Z = expr[unstable_units].tocsr()
            zc = const[unstable_units]
            ls = plo[unstable_units]
            us = phi[unstable_units]
            add_block(Z, yv, None, None, 1, zc, z_sign=-1.0)          # y >= z
            add_block(Z, yv, av, -ls, -1, zc - ls, z_sign=-1.0)       # y <= z - l(1-a)
            k = len(unstable_units)
            r0 = len(senses)
            idx = np.arange(k, dtype=np.intp)
            coo_r.extend([r0 + idx, r0 + idx])
            coo_c.extend([yv, av])
            coo_v.extend([np.ones(k), -us])
            senses.extend([-1] * k)                                    # y <= u a
            rhs.extend(np.zeros(k).tolist())
            lo[yv] = 0.0
            hi[yv] = np.maximum(us, 0.0)
            keep[unstable_units] = 0.0
            new_const[unstable_units] = 0.0
            extra = sp.coo_matrix(
                (np.ones(k), (np.asarray(unstable_units, dtype=np.intp), yv)),
                shape=(width, n_vars),
            ).tocsr()
        expr = (sp.diags(keep) @ expr).tocsr()
        if extra is not None:
            expr = expr + extra
        const = new_const

    # class margin rows: target beats j (< target strictly by delta_tie)
    for j in range(net.n_classes):
        if j == target_class:
            continue
        diff = (expr.getrow(target_class) - expr.getrow(j)).tocoo()
        need = delta_tie if j < target_class else 0.0
        add_row(diff.col, diff.data, 1, need - (const[target_class] - const[j]))

    m_rows = len(senses)
    if m_rows:
        A = sp.coo_matrix(
            (np.concatenate(coo_v),
             (np.concatenate(coo_r), np.concatenate(coo_c))),
            shape=(m_rows, n_vars),
        ).toarray()
    else:
        A = np.zeros((0, n_vars))
    c_obj = np.zeros(n_vars)
    if has_d:
        c_obj[d_index] = 1.0
    lp = LinearProgram(c_obj, A, np.array(senses, dtype=np.int8),
                       np.array(rhs), lo, hi)
    return MilpModel(
        lp=lp,
        binaries=np.arange(a_base, n_vars),
        binary_neurons=tuple(unstable),
        n_inputs=n_in,
        d_index=d_index,
        objective=objective,
        target=target_class,
        delta_tie=delta_tie,
        net=net,
        x0=x0,
        eps_box=eps_box,
        fixings=fixings,
        bounds=bounds,
    )


def lp_text(model: MilpModel) -> str:
    """Model dump in LP text format for external cross-checking."""
    lp = model.lp

    def name(j):
        if j < model.n_inputs:
            return f"x{j}"
        if model.d_index is not None and j == model.d_index:
            return "d"
        base = model.n_inputs + (1 if model.d_index is not None else 0)
        if j < base + len(model.binaries):
            return f"y{j - base}"
        return f"a{j - base - len(model.binaries)}"

    def terms(cols, vals):
        parts = []
        for c, v in zip(cols, vals):
            sign = "+" if v >= 0 else "-"
            parts.append(f"{sign} {abs(v):.17g} {name(c)}")
        return " ".join(parts) if parts else "0"

    lines = ["Minimize", " obj: " + terms(np.flatnonzero(lp.c), lp.c[np.flatnonzero(lp.c)])]
    lines.append("Subject To")
    op = {-1: "<=", 0: "=", 1: ">="}
    for r in range(lp.n_rows):
        cols = np.flatnonzero(lp.A[r])
        lines.append(
            f" c{r}: {terms(cols, lp.A[r, cols])} {op[int(lp.sense[r])]} {lp.b[r]:.17g}"
        )
    lines.append("Bounds")
    for j in range(lp.n_vars):
        lo = "-inf" if not math.isfinite(lp.lo[j]) else f"{lp.lo[j]:.17g}"
        hi = "+inf" if not math.isfinite(lp.hi[j]) else f"{lp.hi[j]:.17g}"
        lines.append(f" {lo} <= {name(j)} <= {hi}")
    if len(model.binaries):
        lines.append("Binaries")
        lines.append(" " + " ".join(name(j) for j in model.binaries))
    lines.append("End")
    return "\n".join(lines) + "\n"
