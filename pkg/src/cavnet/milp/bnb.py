"""Branch and bound over big-M models, exact minimal-distance attack and
relaxation-only robustness certificates."""

from __future__ import annotations

import heapq
import itertools
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from ..network import Network, classify
from .encoding import MilpModel, encode_bigM, interval_bounds
from .linprog import simplex_solve

__all__ = [
    "BnbResult",
    "branch_and_bound",
    "ExactDistanceResult",
    "exact_distance",
    "LowerBoundResult",
    "lower_bound_distance",
]

_INT_TOL = 1e-6
DEFAULT_ATOL = 1e-5
DEFAULT_RTOL = 1e-10


@dataclass
class BnbResult:
    status: str                    # optimal | infeasible | timeout | feasible
    value: float | None = None     # incumbent objective (upper bound)
    lower_bound: float = 0.0
    witness: np.ndarray | None = None
    nodes: int = 0
    log: list = field(default_factory=list)


def _verified_distance(model: MilpModel, point: np.ndarray):
    """Distance of a decoded point if the network really classifies it as the
    target, else None."""
    label = classify(model.net, point.reshape(model.net.input_shape))
    if label != model.target:
        return None
    return float(np.max(np.abs(point - model.x0)))


def _primal_candidates(model: MilpModel, point: np.ndarray | None):
    """Cheap primal probes: the node's box corners, the LP point, and its
    snap onto the box faces, shapes adversarial optima favor."""
    lo, hi = model.bounds.input_lo, model.bounds.input_hi
    yield hi
    yield lo
    if point is not None:
        yield point
        snapped = np.where(point > model.x0, hi,
                           np.where(point < model.x0, lo, point))
        if not np.array_equal(snapped, point):
            yield snapped


def branch_and_bound(
    model: MilpModel,
    atol: float = DEFAULT_ATOL,
    rtol: float = DEFAULT_RTOL,
    time_limit: float | None = None,
    warm_start: tuple | None = None,
    node_limit: int | None = None,
    log: list | None = None,
) -> BnbResult:
    """Best-first branch and bound on the LP relaxation.

    Branches on the unstable binary with the most fractional relaxation
    value; each node re-propagates interval bounds under its phase fixings,
    which tightens the big-M facets and often closes nodes without an LP.
    Terminates when ub - lb <= max(atol, rtol * |ub|). `warm_start` may seed
    the incumbent with (distance, point). A feasibility-objective model
    stops at the first verified witness. On timeout both bounds are
    returned.
    """
    t0 = time.monotonic()
    feasibility = model.objective == "feasibility"
    ub = math.inf
    best_point = None
    if warm_start is not None:
        w_val, w_point = warm_start
        ub = float(w_val)
        best_point = None if w_point is None else np.asarray(w_point, dtype=np.float64)

    counter = itertools.count()
    # node = (lb, -depth, tiebreak, fixings)
    heap = [(0.0, 0, next(counter), dict(model.fixings))]
    nodes = 0
    lb_closed = math.inf  # lower bound over pruned/closed subtrees
    result_log = log if log is not None else []

    def gap_ok(lo, hi):
        return hi - lo <= max(atol, rtol * abs(hi))

    timed_out = False
    while heap:
        lb_open = heap[0][0]
        if not feasibility and ub < math.inf and gap_ok(lb_open, ub):
            lb_closed = min(lb_closed, lb_open)
            break
        if time_limit is not None and time.monotonic() - t0 > time_limit:
            timed_out = True
            lb_closed = min(lb_closed, lb_open)
            break
        if node_limit is not None and nodes >= node_limit:
            timed_out = True
            lb_closed = min(lb_closed, lb_open)
            break
        node_lb, negdepth, _, fixings = heapq.heappop(heap)
        nodes += 1
        if not feasibility and node_lb >= ub - max(atol, rtol * abs(ub)):
            lb_closed = min(lb_closed, node_lb)
            continue
        sub = model.refresh(fixings) if fixings != model.fixings or nodes == 1 else model
        if sub is None:
            lb_closed = min(lb_closed, math.inf)
            continue
        if feasibility:
            # corner probes often settle feasibility before any LP work
            for cand in _primal_candidates(sub, None):
                dist = _verified_distance(sub, cand)
                if dist is not None:
                    return BnbResult("feasible", dist, 0.0, cand, nodes, result_log)
        res = simplex_solve(sub.lp)
        if res.status == "infeasible":
            lb_closed = min(lb_closed, math.inf)
            continue
        if res.status != "optimal":
            # could not bound this node; keep exploring by branching blindly
            res_value = node_lb
            point = None
        else:
            res_value = res.x[sub.d_index] if sub.d_index is not None else 0.0
            point = sub.decode(res.x)
        node_lb = max(node_lb, float(res_value))
        result_log.append(
            {"node": nodes, "lb": float(node_lb),
             "ub": None if ub == math.inf else float(ub), "depth": -negdepth}
        )
        if not feasibility and node_lb >= ub - max(atol, rtol * abs(ub)):
            lb_closed = min(lb_closed, node_lb)
            continue

        point_ok = False
        if point is not None:
            for cand in _primal_candidates(sub, point):
                dist = _verified_distance(sub, cand)
                if dist is not None:
                    point_ok = True
                    if feasibility:
                        return BnbResult("feasible", dist, 0.0, cand, nodes, result_log)
                    if dist < ub:
                        ub, best_point = dist, cand

        n_bins = len(sub.binaries)
        if res.status == "optimal" and n_bins:
            a_vals = res.x[sub.binaries]
            dist_to_int = np.abs(a_vals - np.round(a_vals))
            integral = bool(np.all(dist_to_int <= _INT_TOL))
        else:
            a_vals = np.empty(0)
            dist_to_int = np.empty(0)
            integral = res.status == "optimal"

        if res.status == "optimal" and integral:
            # The relaxation point satisfies the big-M facets exactly, so the
            # LP value is this subtree's optimum.
            if point is not None and not point_ok:
                # margin-tolerance artifact: retry with a stiffer margin
                bumped = encode_bigM(
                    sub.net, sub.x0, sub.eps_box, sub.target,
                    objective=sub.objective,
                    delta_tie=max(sub.delta_tie * 16, 1e-4),
                    fixings=fixings,
                )
                if bumped is not None:
                    res2 = simplex_solve(bumped.lp)
                    if res2.status == "optimal":
                        point2 = bumped.decode(res2.x)
                        dist = _verified_distance(bumped, point2)
                        if dist is not None:
                            point_ok = True
                            if feasibility:
                                return BnbResult(
                                    "feasible", dist, 0.0, point2, nodes, result_log
                                )
                            if dist < ub:
                                ub, best_point = dist, point2
            if point_ok or not feasibility or n_bins == 0:
                lb_closed = min(lb_closed, node_lb)
                continue
            # feasibility mode, unverifiable integral point: branch further
            # so the fully-fixed leaves resolve it exactly

        if n_bins == 0:
            lb_closed = min(lb_closed, node_lb)
            continue
        if res.status == "optimal":
            # Earliest unstable layer first, most fractional within it. Early
            # splits collapse downstream intervals (even when the relaxation
            # sits at an integral point), which is what lets interval refresh
            # prune whole subtrees.
            j = min(
                range(n_bins),
                key=lambda k: (sub.binary_neurons[k][0], -dist_to_int[k]),
            )
            neuron, frac_val = sub.binary_neurons[j], a_vals[j]
        else:
            neuron, frac_val = sub.binary_neurons[0], 0.5
        depth = -negdepth + 1
        preferred = 1 if frac_val >= 0.5 else 0
        for phase in (preferred, 1 - preferred):
            child = dict(fixings)
            child[neuron] = phase
            heapq.heappush(heap, (node_lb, -depth, next(counter), child))

    lb_open = heap[0][0] if heap else math.inf
    lb = min(lb_open, lb_closed)
    if ub < math.inf:
        lb = min(lb, ub)
    if timed_out:
        return BnbResult("timeout", None if ub == math.inf else ub,
                         lb, best_point, nodes, result_log)
    if feasibility:
        if ub < math.inf:
            return BnbResult("feasible", ub, 0.0, best_point, nodes, result_log)
        return BnbResult("infeasible", None, math.inf, None, nodes, result_log)
    if ub == math.inf:
        return BnbResult("infeasible", None, math.inf, None, nodes, result_log)
    return BnbResult("optimal", ub, lb, best_point, nodes, result_log)


def write_log(path, entries):
    """Write branch-and-bound log entries as JSON lines."""
    with open(path, "w") as f:
        for e in entries:
            f.write(json.dumps(e) + "\n")


@dataclass
class ExactDistanceResult:
    """Minimal adversarial distance across all target classes."""

    distance: float                  # math.inf when no adversarial exists
    witness: np.ndarray | None
    target: int | None
    lower_bound: float
    upper_bound: float
    tight: bool
    per_class: list
    nodes: int = 0
    timed_out: bool = False

    @property
    def found(self) -> bool:
        return math.isfinite(self.distance)


_HINT_FACTORS = (1.05, 1.25, 1.5, 2.0)
_BNB_INPUT_LIMIT = 16


def _distance_cap(x0: np.ndarray, domain=(0.0, 1.0)) -> float:
    return float(np.max(np.maximum(x0 - domain[0], domain[1] - x0)))


def _feasible_probe(net, x0, target, eps, delta_tie, time_limit, counters):
    model = encode_bigM(net, x0, eps, target, objective="feasibility",
                        delta_tie=delta_tie)
    if model is None:
        return BnbResult("infeasible", None, math.inf, None, 0)
    res = branch_and_bound(model, time_limit=time_limit)
    counters["nodes"] += res.nodes
    return res


def _rescaled_witness(net, x0, target, witness, radius):
    """Shrink a known witness radially into the given box; returns the point
    and its distance if it still classifies as the target."""
    delta = witness - x0
    dist = float(np.max(np.abs(delta)))
    if dist <= 0:
        return None
    cand = np.clip(x0 + delta * (radius / dist), 0.0, 1.0)
    if classify(net, cand.reshape(net.input_shape)) != target:
        return None
    return cand, float(np.max(np.abs(cand - x0)))


def _bisect_target(net, x0, target, hi_start, atol, rtol, delta_tie,
                   deadline, counters, witness_hint=None):
    """Feasibility bisection on the box radius for one target class."""
    lo = 0.0
    hi = hi_start
    witness = None
    if witness_hint is not None:
        scaled = _rescaled_witness(net, x0, target, witness_hint, hi_start)
        if scaled is not None:
            witness, hi = scaled
    if witness is None:
        limit = None if deadline is None else max(0.0, deadline - time.monotonic())
        probe = _feasible_probe(net, x0, target, hi, delta_tie, limit, counters)
        if probe.status == "timeout":
            return {"target": target, "status": "timeout", "lb": lo, "ub": math.inf}, None
        if probe.status == "infeasible":
            return {"target": target, "status": "pruned", "lb": hi, "ub": math.inf}, None
        hi = min(hi, probe.value)
        witness = probe.witness
    while hi - lo > max(atol, rtol * abs(hi)):
        if deadline is not None and time.monotonic() > deadline:
            return (
                {"target": target, "status": "timeout", "lb": lo, "ub": hi},
                witness,
            )
        mid = 0.5 * (lo + hi)
        scaled = _rescaled_witness(net, x0, target, witness, mid)
        if scaled is not None:
            witness, hi = scaled
            continue
        limit = None if deadline is None else max(0.0, deadline - time.monotonic())
        probe = _feasible_probe(net, x0, target, mid, delta_tie, limit, counters)
        if probe.status == "feasible":
            hi = min(hi, probe.value if probe.value is not None else mid)
            witness = probe.witness
        elif probe.status == "timeout":
            return (
                {"target": target, "status": "timeout", "lb": lo, "ub": hi},
                witness,
            )
        else:
            lo = mid
    return {"target": target, "status": "optimal", "lb": lo, "ub": hi}, witness


def exact_distance(
    net: Network,
    x,
    pool_hint: float | None = None,
    atol: float = DEFAULT_ATOL,
    rtol: float = DEFAULT_RTOL,
    time_limit: float | None = None,
    delta_tie: float = 1e-6,
    strategy: str = "auto",
) -> ExactDistanceResult:
    """Minimal L-inf decision-boundary distance of `x`, solved to the
    atol/rtol gap via one targeted subproblem per other class.

    `pool_hint` (a heuristic upper bound) seeds the search box at
    hint * c for the first c in (1.05, 1.25, 1.5, 2) that admits a feasible
    solution. Small-input networks run the distance-objective branch and
    bound directly; larger ones bisect the box radius with feasibility
    queries, which keeps every node LP free of the per-pixel distance rows.
    Returns an infinite-distance sentinel when no adversarial example exists
    anywhere in the domain.
    """
    x0 = np.asarray(x, dtype=np.float64).ravel()
    clean = classify(net, x0.reshape(net.input_shape))
    cap = _distance_cap(x0)
    deadline = None if time_limit is None else time.monotonic() + time_limit
    counters = {"nodes": 0}
    if strategy == "auto":
        strategy = "bnb" if x0.size <= _BNB_INPUT_LIMIT else "bisect"

    logits = net.forward_batch(x0[None])[0]
    targets = [t for t in range(net.n_classes) if t != clean]
    targets.sort(key=lambda t: -logits[t])

    global_ub = math.inf
    best_witness = None
    best_target = None

    # exploratory runs: grow the heuristic bound until something is feasible
    if pool_hint is not None and math.isfinite(pool_hint):
        for c in _HINT_FACTORS:
            eps = min(pool_hint * c, cap)
            found = False
            for t in targets:
                limit = None if deadline is None else max(0.0, deadline - time.monotonic())
                probe = _feasible_probe(net, x0, t, eps, delta_tie, limit, counters)
                if probe.status == "feasible":
                    global_ub = probe.value
                    best_witness = probe.witness
                    best_target = t
                    found = True
                    break
            if found:
                break

    per_class = []
    timed_out = False
    lb_candidates = []
    for t in targets:
        if deadline is not None and time.monotonic() > deadline:
            per_class.append({"target": t, "status": "timeout",
                              "lb": 0.0, "ub": math.inf})
            timed_out = True
            continue
        hi_start = min(global_ub, cap)
        if strategy == "bnb":
            model = encode_bigM(net, x0, hi_start, t, objective="distance",
                                delta_tie=delta_tie)
            if model is None:
                per_class.append({"target": t, "status": "pruned",
                                  "lb": hi_start, "ub": math.inf})
                lb_candidates.append(hi_start)
                continue
            warm = None
            if best_target == t and best_witness is not None:
                warm = (global_ub, best_witness)
            limit = None if deadline is None else max(0.0, deadline - time.monotonic())
            res = branch_and_bound(model, atol=atol, rtol=rtol,
                                   time_limit=limit, warm_start=warm)
            counters["nodes"] += res.nodes
            if res.status == "timeout":
                timed_out = True
                entry = {"target": t, "status": "timeout",
                         "lb": res.lower_bound,
                         "ub": res.value if res.value is not None else math.inf}
            elif res.status == "infeasible":
                entry = {"target": t, "status": "pruned", "lb": hi_start,
                         "ub": math.inf}
            else:
                entry = {"target": t, "status": "optimal",
                         "lb": res.lower_bound, "ub": res.value}
                if res.value < global_ub and res.witness is not None:
                    global_ub, best_witness, best_target = res.value, res.witness, t
            per_class.append(entry)
            lb_candidates.append(entry["lb"])
        else:
            hint_w = best_witness if best_target == t else None
            entry, witness = _bisect_target(net, x0, t, hi_start, atol, rtol,
                                            delta_tie, deadline, counters,
                                            witness_hint=hint_w)
            per_class.append(entry)
            lb_candidates.append(entry["lb"])
            if entry["status"] == "timeout":
                timed_out = True
            if witness is not None and entry["ub"] < global_ub:
                global_ub, best_witness, best_target = entry["ub"], witness, t

    lb = min(lb_candidates) if lb_candidates else math.inf
    if math.isfinite(global_ub):
        lb = min(lb, global_ub)
    ub = global_ub
    tight = (not timed_out) and (
        not math.isfinite(ub) or ub - lb <= max(atol, rtol * abs(ub))
    )
    return ExactDistanceResult(
        distance=ub,
        witness=best_witness,
        target=best_target,
        lower_bound=lb,
        upper_bound=ub,
        tight=tight,
        per_class=per_class,
        nodes=counters["nodes"],
        timed_out=timed_out,
    )


@dataclass
class LowerBoundResult:
    """Relaxation-only certificate: `certified` means provably no adversarial
    example within the queried radius."""

    certified: bool
    lower_bound: float
    radius: float


def _root_infeasible_all(net, x0, eps, delta_tie) -> bool:
    for t in range(net.n_classes):
        if t == classify(net, x0.reshape(net.input_shape)):
            continue
        model = encode_bigM(net, x0, eps, t, objective="feasibility",
                            delta_tie=delta_tie)
        if model is None:
            continue
        res = simplex_solve(model.lp)
        if res.status != "infeasible":
            return False
    return True


def lower_bound_distance(
    net: Network,
    x,
    eps: float,
    delta_tie: float = 1e-6,
    refine_steps: int = 10,
) -> LowerBoundResult:
    """Root LP relaxation certificate (no branching): certified iff every
    targeted relaxation is infeasible within the eps box. Otherwise bisects
    the radius to report the largest relaxation-certified lower bound."""
    x0 = np.asarray(x, dtype=np.float64).ravel()
    if _root_infeasible_all(net, x0, eps, delta_tie):
        return LowerBoundResult(True, eps, eps)
    lo, hi = 0.0, eps
    for _ in range(refine_steps):
        mid = 0.5 * (lo + hi)
        if mid <= 0:
            break
        if _root_infeasible_all(net, x0, mid, delta_tie):
            lo = mid
        else:
            hi = mid
    return LowerBoundResult(False, lo, eps)
