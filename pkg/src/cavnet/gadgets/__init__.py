from .builder import CircuitBuilder, Expr
from .cnf import (
    Cnf3Formula,
    brute_force_exists_forall,
    brute_force_sat,
    parse_dimacs,
    random_formula,
    to_dimacs,
)
from .fragments import DEFAULT_GAP, Gadgets, NetFragment, fragment_from, gadget
from .minorant import InputSpace, ReluOf, Scale, Space, Sum, propagate_min_gap
from .reductions import (
    CENTERED_GRID_GAP,
    REDUCTION_KINDS,
    AttackInstance,
    EvasionInstance,
    RobustnessFamily,
    certifier_evasion_instance,
    compile_cnf3,
    formula_attack_instance,
    robustness_family_instance,
    verify_reduction,
)

__all__ = [
    "CircuitBuilder",
    "Expr",
    "Cnf3Formula",
    "parse_dimacs",
    "to_dimacs",
    "brute_force_sat",
    "brute_force_exists_forall",
    "random_formula",
    "DEFAULT_GAP",
    "CENTERED_GRID_GAP",
    "Gadgets",
    "NetFragment",
    "gadget",
    "fragment_from",
    "InputSpace",
    "Space",
    "Sum",
    "Scale",
    "ReluOf",
    "propagate_min_gap",
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
