"""Compile 3CNF formulas into ReLU classifiers whose attack/robustness
behaviour encodes the formula, plus empirical verification against the
brute-force oracles.

Three constructions are provided:

* `formula_attack_instance`: a 2-class network centered at (1/2, ..., 1/2)
  with box radius 1/2 that admits an adversarial example iff the formula is
  satisfiable. Coordinate i encodes "true" as x_i > 1/2.

* `robustness_family_instance`: a family of networks indexed by a binary
  parameter block; a parameter choice makes the center provably robust iff
  it falsifies the formula for every assignment of the input block.

* `certifier_evasion_instance`: a 2-class network using a four-band
  coordinate encoding; evading an attack-based certifier of radius gamma by
  perturbing up to 1/2 encodes the same exists/forall question.

The attack and robustness constructions aggregate clause truth with max/min
chains and decide through an unsaturated ReLU margin. On grid points this
matches the saturating Boolean-gadget composition exactly, and in addition
no point of the continuous box can be misclassified: a coordinate sitting
inside the ramp transition zone contributes a fractional truth value that
can only lower the conjunction below the decision threshold. That makes the
constructions sound for continuous-relaxation solvers, which search the
whole box rather than the grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..network import Network
from .builder import CircuitBuilder, Expr
from .cnf import Cnf3Formula, brute_force_exists_forall, brute_force_sat
from .fragments import DEFAULT_GAP, Gadgets, NetFragment, fragment_from

# Distance floor of the 1/255 image grid augmented with the half-point
# center: adjacent points sit 1/510 apart; 1/512 is the dyadic floor below.
CENTERED_GRID_GAP = 1.0 / 512.0

__all__ = [
    "CENTERED_GRID_GAP",
    "compile_cnf3",
    "AttackInstance",
    "formula_attack_instance",
    "RobustnessFamily",
    "robustness_family_instance",
    "EvasionInstance",
    "certifier_evasion_instance",
    "verify_reduction",
    "REDUCTION_KINDS",
]


def compile_cnf3(formula: Cnf3Formula, gap: float = DEFAULT_GAP) -> NetFragment:
    """Boolean circuit for the formula: n {0,1} inputs -> 1 {0,1} output.

    Construction size is linear in the clause count; chains associate left.
    """

    def outputs(g: Gadgets, xs):
        def lit(l):
            v = xs[abs(l) - 1]
            return v if l > 0 else g.not_(v)

        clause_vals = [g.or_all([lit(l) for l in c]) for c in formula.clauses]
        return g.and_all(clause_vals)

    return fragment_from(
        f"cnf3[{formula.n_vars}v,{formula.n_clauses}c]",
        formula.n_vars,
        gap,
        outputs,
    )


def _truth_ramp(g: Gadgets, x: Expr, threshold: float = 0.5) -> Expr:
    """0 for x <= threshold, 1 for x >= threshold + gap, linear between."""
    return g.step0(x - threshold)


def _strict_literals(builder: CircuitBuilder, t: Expr):
    """Positive/negative literal margins for a truth level t in [0, 1].

    The positive margin is strictly positive iff t > 1/2 and the negative
    one iff t < 1/2, so a conjunction of clause maxima over these margins
    exceeds 0 exactly when the rounded assignment satisfies the formula.
    Splitting each ReLU on its own kink is the Boolean case split, which
    keeps the big-M search tree aligned with the formula structure.
    """
    pos = builder.relu(t - 0.5)
    neg = builder.relu(0.5 - t)
    return pos, neg


def _margin_network(builder: CircuitBuilder, g: Gadgets, clause_values,
                    center_guard: Expr, n_inputs: int) -> Network:
    """Two-logit network: class 1 iff every clause margin is strictly
    positive and the guard is strictly positive; ties resolve to class 0."""
    truth = g.min_all(clause_values)
    f1 = g.min_(truth, center_guard)
    f0 = builder.const(0.0)
    layers = builder.build([f0, f1])
    return Network((n_inputs,), layers, 2)


def _center_guard(builder: CircuitBuilder, g: Gadgets, xs) -> Expr:
    """L1 distance from the all-halves center; 0 exactly at the center."""
    parts = [g.abs_(x - 0.5) for x in xs]
    acc = parts[0]
    for p in parts[1:]:
        acc = acc + p
    return acc


@dataclass(frozen=True)
class AttackInstance:
    """Adversarial-attack query: does the ball around `center` contain a
    differently-classified point?"""

    formula: Cnf3Formula
    center: np.ndarray
    radius: float
    network: Network
    gap: float


def formula_attack_instance(
    formula: Cnf3Formula, gap: float = CENTERED_GRID_GAP
) -> AttackInstance:
    """Network classifying the all-halves center as 0 and a grid point x as 1
    iff the formula holds under the assignment (x_i > 1/2)."""
    n = formula.n_vars
    builder = CircuitBuilder(n)
    g = Gadgets(builder, gap)
    xs = builder.inputs()
    lits = [_strict_literals(builder, _truth_ramp(g, x)) for x in xs]

    def lit(l):
        pos, neg = lits[abs(l) - 1]
        return pos if l > 0 else neg

    clause_vals = [g.max_all([lit(l) for l in c]) for c in formula.clauses]
    guard = _center_guard(builder, g, xs)
    net = _margin_network(builder, g, clause_vals, guard, n)
    center = np.full(n, 0.5)
    return AttackInstance(formula, center, 0.5, net, gap)


@dataclass(frozen=True)
class RobustnessFamily:
    """Parameterized robustness query: is there a valid binary parameter
    block making the center robust within the radius?"""

    formula: Cnf3Formula
    split: tuple[int, int]
    center: np.ndarray
    radius: float
    gap: float
    instantiate: Callable = field(repr=False)
    validator: Callable = field(repr=False)


def robustness_family_instance(
    formula: Cnf3Formula, split: tuple[int, int], gap: float = CENTERED_GRID_GAP
) -> RobustnessFamily:
    """Family of networks over the trailing variable block, indexed by binary
    values of the leading block folded in as constants."""
    n_params, n_inputs = split
    if n_params < 1 or n_inputs < 1 or n_params + n_inputs != formula.n_vars:
        raise ValueError(
            f"split {split} does not partition {formula.n_vars} variables"
        )

    def validator(theta) -> int:
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (n_params,):
            return 0
        return int(all(v in (0.0, 1.0) for v in theta))

    def instantiate(theta) -> Network:
        if not validator(theta):
            raise ValueError("parameter block must be a 0/1 vector")
        theta = np.asarray(theta, dtype=np.float64)
        builder = CircuitBuilder(n_inputs)
        g = Gadgets(builder, gap)
        xs = builder.inputs()
        lits = [_strict_literals(builder, _truth_ramp(g, x)) for x in xs]

        def lit(l):
            v = abs(l)
            if v <= n_params:
                truth = theta[v - 1] if l > 0 else 1.0 - theta[v - 1]
                return builder.const(0.5 * truth)
            pos, neg = lits[v - n_params - 1]
            return pos if l > 0 else neg

        clause_vals = [g.max_all([lit(l) for l in c]) for c in formula.clauses]
        guard = _center_guard(builder, g, xs)
        return _margin_network(builder, g, clause_vals, guard, n_inputs)

    center = np.full(n_inputs, 0.5)
    return RobustnessFamily(
        formula, tuple(split), center, 0.5, gap, instantiate, validator
    )


@dataclass(frozen=True)
class EvasionInstance:
    """Certifier-evasion query: find a point within `attack_radius` of the
    center that is differently classified and whose own `defense_radius`
    ball is classified uniformly."""

    formula: Cnf3Formula
    split: tuple[int, int]
    center: np.ndarray
    defense_radius: float
    attack_radius: float
    network: Network
    gap: float


def certifier_evasion_instance(
    formula: Cnf3Formula,
    split: tuple[int, int],
    gamma: float = 0.375,
    gap: float = DEFAULT_GAP,
) -> EvasionInstance:
    """Four-band construction: coordinate bands (0,1/4), (1/4,1/2), (1/2,3/4)
    and (3/4,1) encode the four combinations of leading-block and
    trailing-block truth values; band edges, 0, 1 and exact halves are
    invalid. The network returns class 1 at the all-halves center, class 0
    on invalid encodings, and the formula value on valid ones.

    The shorter variable block is implicitly padded with unused coordinates,
    so the input has max(n_first, n_second) coordinates.
    """
    if not 0.25 < gamma < 0.5:
        raise ValueError("gamma must lie strictly between 1/4 and 1/2")
    n_first, n_second = split
    if n_first < 1 or n_second < 1 or n_first + n_second != formula.n_vars:
        raise ValueError(
            f"split {split} does not partition {formula.n_vars} variables"
        )
    n = max(n_first, n_second)
    builder = CircuitBuilder(n)
    g = Gadgets(builder, gap)
    xs = builder.inputs()

    e_first = [g.gt(x, 0.5) for x in xs]
    e_second = [
        g.or_(g.open_(x, 0.25, 0.5), g.open_(x, 0.75, 1.0)) for x in xs
    ]
    invalid_out = [g.or_(g.leq(x, 0.0), g.geq(x, 1.0)) for x in xs]
    invalid_edge = [
        g.or_all([g.eq(x, 0.25), g.eq(x, 0.5), g.eq(x, 0.75)]) for x in xs
    ]
    inv_false = g.or_all([g.or_(o, e) for o, e in zip(invalid_out, invalid_edge)])
    inv_true = g.or_all([g.eq(x, 0.5) for x in xs])

    def lit(l):
        v = abs(l)
        val = e_first[v - 1] if v <= n_first else e_second[v - n_first - 1]
        return val if l > 0 else g.not_(val)

    clause_vals = [g.or_all([lit(l) for l in c]) for c in formula.clauses]
    formula_val = g.and_all(clause_vals)
    h1 = g.or_(inv_true, g.and_(g.not_(inv_false), formula_val))
    h0 = g.not_(h1)
    net = Network((n,), builder.build([h0, h1]), 2)
    center = np.full(n, 0.5)
    return EvasionInstance(
        formula, tuple(split), center, gamma, 0.5, net, gap
    )


# -- empirical verification -------------------------------------------------

REDUCTION_KINDS = ("sat-attack", "param-robust", "certifier-evasion")

_CORNER_LIMIT = 20


def _corners(n: int) -> np.ndarray:
    if n > _CORNER_LIMIT:
        raise ValueError(f"corner enumeration limited to {_CORNER_LIMIT} dims")
    r = np.arange(1 << n, dtype=np.uint64)[:, None]
    shifts = np.arange(n - 1, -1, -1, dtype=np.uint64)[None, :]
    return ((r >> shifts) & 1).astype(np.float64)


def _labels(net: Network, points: np.ndarray) -> np.ndarray:
    return net.forward_batch(points).argmax(axis=1)


def _report(kind, formula, oracle, network_decision, witness):
    return {
        "kind": kind,
        "n": formula.n_vars,
        "m": formula.n_clauses,
        "oracle": bool(oracle),
        "network_decision": bool(network_decision),
        "agree": bool(oracle) == bool(network_decision),
        "witness": witness,
    }


def _verify_sat_attack(formula: Cnf3Formula) -> dict:
    inst = formula_attack_instance(formula)
    oracle = brute_force_sat(formula) is not None
    # The network's output on grid points depends on the input only through
    # the threshold assignment (x_i > 1/2) and the center detector, so the
    # 2^n corners cover every reachable behaviour in the ball.
    corners = _corners(formula.n_vars)
    labels = _labels(inst.network, corners)
    expected = formula.evaluate_batch(corners > 0.5).astype(np.intp)
    center_label = _labels(inst.network, inst.center[None])[0]
    decision = bool((labels == 1).any())
    witness = None
    mismatch = labels != expected
    if center_label != 0:
        witness = {"point": inst.center.tolist(), "label": int(center_label)}
        return _report("sat-attack", formula, oracle, not oracle, witness)
    if mismatch.any():
        i = int(np.argmax(mismatch))
        witness = {
            "point": corners[i].tolist(),
            "label": int(labels[i]),
            "expected": int(expected[i]),
        }
        return _report("sat-attack", formula, oracle, not oracle, witness)
    if oracle:
        i = int(np.argmax(labels == 1))
        witness = {"point": corners[i].tolist(), "label": 1}
    return _report("sat-attack", formula, oracle, decision, witness)


def _verify_param_robust(formula: Cnf3Formula, split) -> dict:
    family = robustness_family_instance(formula, split)
    n_params, n_inputs = family.split
    oracle = brute_force_exists_forall(formula, family.split)
    corners = _corners(n_inputs)
    corner_bits = corners > 0.5
    robust_theta = None
    for theta in _corners(n_params):
        net = family.instantiate(theta)
        if family.validator(theta) != 1:
            raise AssertionError("corner parameters must validate")
        labels = _labels(net, corners)
        full = np.concatenate(
            [np.broadcast_to(theta > 0.5, corner_bits.shape[:1] + (n_params,)),
             corner_bits],
            axis=1,
        )
        expected = formula.evaluate_batch(full).astype(np.intp)
        if (labels != expected).any():
            i = int(np.argmax(labels != expected))
            witness = {
                "theta": theta.tolist(),
                "point": corners[i].tolist(),
                "label": int(labels[i]),
                "expected": int(expected[i]),
            }
            return _report("param-robust", formula, oracle, not oracle, witness)
        center_label = _labels(net, family.center[None])[0]
        if center_label != 0:
            witness = {"theta": theta.tolist(), "center_label": int(center_label)}
            return _report("param-robust", formula, oracle, not oracle, witness)
        if robust_theta is None and not (labels == 1).any():
            robust_theta = theta
    decision = robust_theta is not None
    witness = {"theta": robust_theta.tolist()} if decision else None
    return _report("param-robust", formula, oracle, decision, witness)


def _evasion_witness_values(bit: int, gamma: float):
    """Per-coordinate probe values inside the gamma-ball of a 0/1 corner.

    Returns (valid values for trailing-bit 0/1, invalid values). Band
    midpoints are used when the ball reaches them, otherwise the midpoint of
    the reachable open slice.
    """
    b01 = 0.375 if gamma >= 0.375 else (0.25 + gamma) / 2.0
    if bit == 0:
        return {0: 0.125, 1: b01}, (0.0, 0.25)
    return {0: 1.0 - b01, 1: 0.875}, (0.75, 1.0)


def _verify_certifier_evasion(formula, split, gamma) -> dict:
    inst = certifier_evasion_instance(formula, split, gamma)
    n_first, n_second = inst.split
    n = inst.network.input_shape[0]
    oracle = brute_force_exists_forall(formula, inst.split)
    if _labels(inst.network, inst.center[None])[0] != 1:
        return _report(
            "certifier-evasion", formula, oracle, not oracle,
            {"center_label": 0},
        )
    second_corners = _corners(n_second) > 0.5
    passing = None
    for theta in _corners(n_first) > 0.5:
        cand = np.concatenate([theta, np.zeros(n - n_first, bool)])
        cand_point = cand.astype(np.float64)
        if _labels(inst.network, cand_point[None])[0] != 0:
            continue
        # Valid-encoding probes: every reachable trailing assignment.
        probes = np.empty((len(second_corners), n))
        for i in range(n):
            vals, _ = _evasion_witness_values(int(cand[i]), gamma)
            if i < n_second:
                probes[:, i] = np.where(second_corners[:, i], vals[1], vals[0])
            else:
                probes[:, i] = vals[0]
        labels = _labels(inst.network, probes)
        full = np.concatenate(
            [np.broadcast_to(theta[:n_first], (len(second_corners), n_first)),
             second_corners],
            axis=1,
        )
        expected = formula.evaluate_batch(full).astype(np.intp)
        if (labels != expected).any():
            i = int(np.argmax(labels != expected))
            witness = {
                "candidate": cand_point.tolist(),
                "point": probes[i].tolist(),
                "label": int(labels[i]),
                "expected": int(expected[i]),
            }
            return _report(
                "certifier-evasion", formula, oracle, not oracle, witness
            )
        if (labels == 1).any():
            continue  # attack on the candidate's own ball succeeds
        # Invalid-encoding probes must all classify 0.
        base = np.array(
            [_evasion_witness_values(int(b), gamma)[0][0] for b in cand]
        )
        bad = []
        for i in range(n):
            _, invalid = _evasion_witness_values(int(cand[i]), gamma)
            for v in invalid:
                p = base.copy()
                p[i] = v
                bad.append(p)
        bad_labels = _labels(inst.network, np.array(bad))
        if (bad_labels != 0).any():
            i = int(np.argmax(bad_labels != 0))
            witness = {"candidate": cand_point.tolist(), "point": bad[i].tolist()}
            return _report(
                "certifier-evasion", formula, oracle, not oracle, witness
            )
        if passing is None:
            passing = cand_point
    decision = passing is not None
    witness = {"candidate": passing.tolist()} if decision else None
    return _report("certifier-evasion", formula, oracle, decision, witness)


def verify_reduction(
    kind: str,
    formula: Cnf3Formula,
    split: tuple[int, int] | None = None,
    gamma: float = 0.375,
) -> dict:
    """Evaluate a constructed network on its finite witness grid and compare
    the induced decision against the matching brute-force oracle.

    Returns a report dict {kind, n, m, oracle, network_decision, agree,
    witness}; `witness` carries a counterexample when the two disagree.
    """
    if kind == "sat-attack":
        return _verify_sat_attack(formula)
    if kind == "param-robust":
        if split is None:
            raise ValueError("param-robust verification needs a split")
        return _verify_param_robust(formula, split)
    if kind == "certifier-evasion":
        if split is None:
            raise ValueError("certifier-evasion verification needs a split")
        return _verify_certifier_evasion(formula, split, gamma)
    raise ValueError(f"unknown reduction kind {kind!r}; expected {REDUCTION_KINDS}")
