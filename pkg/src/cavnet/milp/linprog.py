"""Dense bounded-variable primal simplex.

Two-phase method over the standard form [A | I_slack | I_artificial] with
per-variable bounds (infinities allowed). Entering variables follow Dantzig
pricing and fall back to Bland's rule permanently once the objective stalls,
which guards against cycling on the degenerate distance geometry these
models produce. The tableau is refactorized from the basis periodically to
keep drift in check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["LinearProgram", "SimplexResult", "simplex_solve", "FEASIBILITY_TOL"]

FEASIBILITY_TOL = 1e-8
_PRICE_TOL = 1e-9
_PIVOT_TOL = 1e-10


@dataclass
class LinearProgram:
    """min c.x subject to A x (<=,=,>=) b and lo <= x <= hi.

    `sense` holds -1, 0, +1 per row for <=, =, >=. Bounds may be +-inf but
    every matrix coefficient must be finite.
    """

    c: np.ndarray
    A: np.ndarray
    sense: np.ndarray
    b: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=np.float64)
        self.A = np.asarray(self.A, dtype=np.float64)
        if self.A.ndim != 2:
            raise ValueError("A must be a matrix")
        m, n = self.A.shape
        self.sense = np.asarray(self.sense, dtype=np.int8)
        self.b = np.asarray(self.b, dtype=np.float64)
        self.lo = np.asarray(self.lo, dtype=np.float64)
        self.hi = np.asarray(self.hi, dtype=np.float64)
        if self.c.shape != (n,) or self.b.shape != (m,) or self.sense.shape != (m,):
            raise ValueError("inconsistent LP dimensions")
        if self.lo.shape != (n,) or self.hi.shape != (n,):
            raise ValueError("bounds must match the variable count")
        if not (np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.b))
                and np.all(np.isfinite(self.c))):
            raise ValueError("LP coefficients must be finite")
        if np.any(self.lo > self.hi):
            raise ValueError("lower bound exceeds upper bound")

    @property
    def n_vars(self) -> int:
        return self.A.shape[1]

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]


@dataclass
class SimplexResult:
    status: str  # optimal | infeasible | unbounded | iteration_limit
    value: float | None = None
    x: np.ndarray | None = None
    iterations: int = 0


def _initial_value(lo, hi):
    v = np.zeros_like(lo)
    finite_lo = np.isfinite(lo)
    finite_hi = np.isfinite(hi)
    v[finite_lo] = lo[finite_lo]
    only_hi = ~finite_lo & finite_hi
    v[only_hi] = hi[only_hi]
    return v


class _Tableau:
    def __init__(self, lp: LinearProgram):
        m, n = lp.A.shape
        self.lp = lp
        self.m, self.n_real = m, n
        self.N = n + 2 * m
        A = np.zeros((m, self.N))
        A[:, :n] = lp.A
        A[:, n : n + m] = np.eye(m)
        A[:, n + m :] = np.eye(m)
        lo = np.full(self.N, -np.inf)
        hi = np.full(self.N, np.inf)
        lo[:n], hi[:n] = lp.lo, lp.hi
        le = lp.sense == -1
        ge = lp.sense == 1
        eq = lp.sense == 0
        slack = np.arange(n, n + m)
        lo[slack[le]], hi[slack[le]] = 0.0, np.inf
        lo[slack[ge]], hi[slack[ge]] = -np.inf, 0.0
        lo[slack[eq]], hi[slack[eq]] = 0.0, 0.0
        self.A_full = A
        self.lo, self.hi = lo, hi
        self.art = np.arange(n + m, self.N)

        values = np.zeros(self.N)
        values[:n] = _initial_value(lp.lo, lp.hi)
        values[slack] = _initial_value(lo[slack], hi[slack])
        resid = lp.b - A[:, : n + m] @ values[: n + m]
        values[self.art] = resid
        neg = resid < 0
        lo[self.art], hi[self.art] = 0.0, np.inf
        lo[self.art[neg]], hi[self.art[neg]] = -np.inf, 0.0
        self.c_phase1 = np.zeros(self.N)
        self.c_phase1[self.art] = np.where(neg, -1.0, 1.0)

        self.values = values
        self.status = np.zeros(self.N, dtype=np.int8)  # 0 lower, 1 upper, 2 basic
        at_upper = ~np.isfinite(lo) & np.isfinite(hi)
        self.status[at_upper] = 1
        self.basis = self.art.copy()
        self.status[self.basis] = 2
        self.T = A.copy()  # basis = artificials => B = I
        self.iterations = 0
        self._since_refactor = 0

    def refactor(self):
        """Recompute the tableau and basic values from the current basis."""
        B = self.A_full[:, self.basis]
        try:
            self.T = np.linalg.solve(B, self.A_full)
        except np.linalg.LinAlgError:
            return False
        nonbasic = np.ones(self.N, dtype=bool)
        nonbasic[self.basis] = False
        rhs = self.lp.b - self.A_full[:, nonbasic] @ self.values[nonbasic]
        self.values[self.basis] = np.linalg.solve(B, rhs)
        self._since_refactor = 0
        return True

    def solve_phase(self, c, max_iter, tol=_PRICE_TOL):
        m = self.m
        bland = False
        stall = 0
        last_obj = float(c @ self.values)
        basic_mask = np.zeros(self.N, dtype=bool)
        basic_mask[self.basis] = True
        movable = (self.hi - self.lo) > 0  # fixed vars can never enter
        while self.iterations < max_iter:
            if self._since_refactor >= max(100, 2 * m):
                self.refactor()
            z = c - c[self.basis] @ self.T
            z[self.basis] = 0.0
            at_lower = (self.status == 0) & ~basic_mask & movable
            at_upper = (self.status == 1) & ~basic_mask & movable
            can_inc = at_lower & (z < -tol)
            can_dec = at_upper & (z > tol)
            free_var = at_lower & ~np.isfinite(self.lo) & ~np.isfinite(self.hi)
            can_dec |= free_var & (z > tol)
            eligible = can_inc | can_dec
            if not eligible.any():
                return "optimal"
            if bland:
                j = int(np.argmax(eligible))
            else:
                score = np.where(eligible, np.abs(z), -1.0)
                j = int(np.argmax(score))
            sigma = 1.0 if can_inc[j] else -1.0
            col = self.T[:, j]

            xB = self.values[self.basis]
            loB = self.lo[self.basis]
            hiB = self.hi[self.basis]
            d = sigma * col
            step = np.full(m, np.inf)
            dec = d > _PIVOT_TOL
            inc = d < -_PIVOT_TOL
            step[dec] = (xB[dec] - loB[dec]) / d[dec]
            step[inc] = (xB[inc] - hiB[inc]) / d[inc]
            step[step < 0] = 0.0
            if m:
                r = int(np.argmin(step))
                t_basic = step[r]
            else:
                r, t_basic = -1, np.inf
            span = self.hi[j] - self.lo[j]
            t = min(t_basic, span)
            if not np.isfinite(t):
                return "unbounded"

            if span < t_basic - 1e-15:
                self.values[j] += sigma * span
                self.values[self.basis] = xB - d * span
                self.status[j] = 1 - self.status[j]
            else:
                if bland:
                    ties = np.flatnonzero(np.abs(step - t_basic) <= 1e-12)
                    r = int(ties[np.argmin(self.basis[ties])])
                elif t_basic <= 1e-15:
                    ties = np.flatnonzero(step <= 1e-15)
                    r = int(ties[np.argmax(np.abs(col[ties]))])
                t = step[r]
                leave = self.basis[r]
                piv = col[r]
                if abs(piv) < _PIVOT_TOL:
                    if self.refactor():
                        continue
                    return "singular"
                self.values[self.basis] = xB - d * t
                self.values[j] += sigma * t
                # leaving variable lands on the bound it hit
                self.values[leave] = self.lo[leave] if d[r] > 0 else self.hi[leave]
                self.status[leave] = 0 if d[r] > 0 else 1
                self.basis[r] = j
                self.status[j] = 2
                basic_mask[leave] = False
                basic_mask[j] = True
                Tr = self.T[r] / piv
                self.T -= np.outer(self.T[:, j], Tr)
                self.T[r] = Tr
                self._since_refactor += 1

            self.iterations += 1
            obj = float(c @ self.values)
            if obj < last_obj - 1e-12:
                stall = 0
            else:
                stall += 1
                if not bland and stall > 2 * (m + self.n_real) + 100:
                    bland = True
            last_obj = obj
        return "iteration_limit"

    def drive_out_artificials(self):
        """Pivot basic artificials (at value ~0) out of the basis if possible."""
        for r in range(self.m):
            var = self.basis[r]
            if var < self.n_real + self.m:
                continue
            row = self.T[r]
            cand = np.flatnonzero(np.abs(row[: self.n_real + self.m]) > 1e-7)
            cand = [j for j in cand if self.status[j] != 2]
            if not cand:
                continue  # redundant row; pinned artificial stays basic at 0
            j = max(cand, key=lambda k: abs(row[k]))
            piv = row[j]
            self.values[var] = 0.0
            self.status[var] = 0
            self.basis[r] = j
            self.status[j] = 2
            Tr = self.T[r] / piv
            self.T -= np.outer(self.T[:, j], Tr)
            self.T[r] = Tr


def simplex_solve(
    lp: LinearProgram,
    feas_tol: float = FEASIBILITY_TOL,
    max_iter: int | None = None,
) -> SimplexResult:
    """Solve the LP; returns optimal(value, point), infeasible or unbounded."""
    tab = _Tableau(lp)
    if max_iter is None:
        max_iter = 200 * (tab.m + lp.n_vars) + 2000

    status = tab.solve_phase(tab.c_phase1, max_iter)
    if status in ("iteration_limit", "singular"):
        return SimplexResult("iteration_limit", iterations=tab.iterations)
    tab.refactor()
    phase1 = float(np.abs(tab.values[tab.art]).sum())
    if phase1 > feas_tol * max(1.0, float(np.abs(lp.b).max(initial=0.0))):
        return SimplexResult("infeasible", iterations=tab.iterations)

    tab.drive_out_artificials()
    tab.lo[tab.art] = 0.0
    tab.hi[tab.art] = 0.0
    nonbasic_art = tab.art[tab.status[tab.art] != 2]
    tab.values[nonbasic_art] = 0.0
    tab.status[nonbasic_art] = 0

    c_full = np.zeros(tab.N)
    c_full[: lp.n_vars] = lp.c
    status = tab.solve_phase(c_full, max_iter)
    if status == "unbounded":
        return SimplexResult("unbounded", iterations=tab.iterations)
    if status in ("iteration_limit", "singular"):
        return SimplexResult("iteration_limit", iterations=tab.iterations)
    tab.refactor()
    x = tab.values[: lp.n_vars].copy()
    finite_lo = np.isfinite(lp.lo)
    finite_hi = np.isfinite(lp.hi)
    x[finite_lo] = np.maximum(x[finite_lo], lp.lo[finite_lo])
    x[finite_hi] = np.minimum(x[finite_hi], lp.hi[finite_hi])
    return SimplexResult("optimal", float(lp.c @ x), x, tab.iterations)
