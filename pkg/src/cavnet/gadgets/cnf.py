"""3CNF formulas: representation, DIMACS I/O and brute-force oracles."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Cnf3Formula",
    "parse_dimacs",
    "to_dimacs",
    "brute_force_sat",
    "brute_force_exists_forall",
    "random_formula",
]

_SAT_LIMIT = 24
_EXISTS_FORALL_LIMIT = 20
_CHUNK_BITS = 16


@dataclass(frozen=True)
class Cnf3Formula:
    """Conjunction of 3-literal clauses over variables 1..n_vars.

    Literals are signed 1-based variable indexes; -k negates variable k.
    """

    n_vars: int
    clauses: tuple

    def __post_init__(self):
        if self.n_vars < 1:
            raise ValueError("formula needs at least one variable")
        clauses = tuple(tuple(int(l) for l in c) for c in self.clauses)
        for c in clauses:
            if len(c) != 3:
                raise ValueError(f"clause {c} must have exactly 3 literals")
            for lit in c:
                if lit == 0 or abs(lit) > self.n_vars:
                    raise ValueError(f"literal {lit} out of range 1..{self.n_vars}")
        object.__setattr__(self, "clauses", clauses)

    @property
    def n_clauses(self) -> int:
        return len(self.clauses)

    def _index_arrays(self):
        idx = np.array([[abs(l) - 1 for l in c] for c in self.clauses], dtype=np.intp)
        neg = np.array([[l < 0 for l in c] for c in self.clauses], dtype=bool)
        return idx, neg

    def evaluate(self, assignment) -> bool:
        """Truth value under a boolean assignment of length n_vars."""
        a = np.asarray(assignment, dtype=bool)
        if a.shape != (self.n_vars,):
            raise ValueError(f"assignment must have length {self.n_vars}")
        return bool(self.evaluate_batch(a[None])[0])

    def evaluate_batch(self, assignments: np.ndarray) -> np.ndarray:
        """Truth values for a (B, n_vars) boolean matrix of assignments."""
        a = np.asarray(assignments, dtype=bool)
        if not self.clauses:
            return np.ones(a.shape[0], dtype=bool)
        idx, neg = self._index_arrays()
        lits = a[:, idx] ^ neg
        return lits.any(axis=2).all(axis=1)


def _assignment_block(n: int, start: int, count: int) -> np.ndarray:
    """Rows `start .. start+count` of the 2^n assignment table.

    Row r assigns variable k (1-based) the bit (r >> (n - k)) & 1, so
    assignments enumerate in lexicographic order x1 x2 ... xn.
    """
    r = np.arange(start, start + count, dtype=np.uint64)[:, None]
    shifts = np.arange(n - 1, -1, -1, dtype=np.uint64)[None, :]
    return ((r >> shifts) & 1).astype(bool)


def brute_force_sat(formula: Cnf3Formula):
    """Exhaustive satisfiability scan; a satisfying assignment or None."""
    n = formula.n_vars
    if n > _SAT_LIMIT:
        raise ValueError(f"brute force limited to {_SAT_LIMIT} variables")
    total = 1 << n
    chunk = 1 << min(n, _CHUNK_BITS)
    for start in range(0, total, chunk):
        block = _assignment_block(n, start, min(chunk, total - start))
        hits = formula.evaluate_batch(block)
        if hits.any():
            return tuple(bool(v) for v in block[int(np.argmax(hits))])
    return None


def brute_force_exists_forall(formula: Cnf3Formula, split: tuple[int, int]) -> bool:
    """Does some assignment of the first block falsify the formula for every
    assignment of the second block?

    `split` = (n_first, n_second) partitions variables 1..n into a leading
    block and a trailing block; the answer is the exhaustive double loop
    "exists first-block . forall second-block . not formula".
    """
    n_first, n_second = split
    if n_first < 0 or n_second < 0 or n_first + n_second != formula.n_vars:
        raise ValueError(
            f"split {split} does not cover the {formula.n_vars} variables"
        )
    if formula.n_vars > _EXISTS_FORALL_LIMIT:
        raise ValueError(
            f"brute force limited to {_EXISTS_FORALL_LIMIT} variables"
        )
    firsts = _assignment_block(n_first, 0, 1 << n_first) if n_first else np.zeros((1, 0), bool)
    seconds = _assignment_block(n_second, 0, 1 << n_second) if n_second else np.zeros((1, 0), bool)
    for fa in firsts:
        full = np.concatenate(
            [np.broadcast_to(fa, (len(seconds), n_first)), seconds], axis=1
        )
        if not formula.evaluate_batch(full).any():
            return True
    return False


def parse_dimacs(text: str) -> Cnf3Formula:
    """Parse DIMACS CNF. Clauses longer than 3 literals are rejected; shorter
    clauses are padded by repeating a literal, which preserves semantics."""
    n_vars = None
    n_clauses_decl = None
    clauses = []
    current: list[int] = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("c"):
            continue
        if line.startswith("p"):
            parts = line.split()
            if len(parts) != 4 or parts[1] != "cnf":
                raise ValueError(f"bad problem line: {raw!r}")
            n_vars = int(parts[2])
            n_clauses_decl = int(parts[3])
            continue
        if n_vars is None:
            raise ValueError("clause before problem line")
        for tok in line.split():
            lit = int(tok)
            if lit == 0:
                if not current:
                    raise ValueError("empty clause")
                if len(current) > 3:
                    raise ValueError(f"clause with {len(current)} literals rejected")
                while len(current) < 3:
                    current.append(current[-1])
                clauses.append(tuple(current))
                current = []
            else:
                current.append(lit)
    if current:
        raise ValueError("unterminated clause")
    if n_vars is None:
        raise ValueError("missing problem line")
    if n_clauses_decl is not None and len(clauses) != n_clauses_decl:
        raise ValueError(
            f"declared {n_clauses_decl} clauses, found {len(clauses)}"
        )
    return Cnf3Formula(n_vars, tuple(clauses))


def to_dimacs(formula: Cnf3Formula) -> str:
    lines = [f"p cnf {formula.n_vars} {formula.n_clauses}"]
    for c in formula.clauses:
        lines.append(" ".join(str(l) for l in c) + " 0")
    return "\n".join(lines) + "\n"


def random_formula(n_vars: int, n_clauses: int, rng: np.random.Generator) -> Cnf3Formula:
    """Uniform random 3CNF: each clause picks 3 distinct variables and signs."""
    if n_vars < 3:
        raise ValueError("random 3CNF needs at least 3 variables")
    clauses = []
    for _ in range(n_clauses):
        vars_ = rng.choice(n_vars, size=3, replace=False) + 1
        signs = rng.integers(0, 2, size=3) * 2 - 1
        clauses.append(tuple(int(v * s) for v, s in zip(vars_, signs)))
    return Cnf3Formula(n_vars, tuple(clauses))
