from .bnb import (
    BnbResult,
    ExactDistanceResult,
    LowerBoundResult,
    branch_and_bound,
    exact_distance,
    lower_bound_distance,
    write_log,
)
from .encoding import MilpModel, NeuronBounds, encode_bigM, interval_bounds, lp_text
from .linprog import FEASIBILITY_TOL, LinearProgram, SimplexResult, simplex_solve

__all__ = [
    "LinearProgram",
    "SimplexResult",
    "simplex_solve",
    "FEASIBILITY_TOL",
    "NeuronBounds",
    "interval_bounds",
    "MilpModel",
    "encode_bigM",
    "lp_text",
    "BnbResult",
    "branch_and_bound",
    "ExactDistanceResult",
    "exact_distance",
    "LowerBoundResult",
    "lower_bound_distance",
    "write_log",
]
