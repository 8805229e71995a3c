"""Self-contained sparse LP solver: two-phase revised simplex with bounds.

Problems are equality-constrained (A x = b) with per-variable lower/upper
bounds, +-inf allowed. The basis inverse is kept dense and updated by
elementary row operations, with a full refactorization every 50 pivots and
whenever the update looks unhealthy. Dantzig pricing switches to Bland's rule
after a streak of degenerate pivots so cycling cannot occur.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

_TOL_COST = 1e-9       # reduced-cost optimality tolerance
_TOL_PIVOT = 1e-9      # smallest acceptable pivot magnitude
_TOL_RATIO = 1e-12     # step sizes below this count as degenerate
_DEGEN_STREAK = 25     # consecutive degenerate pivots before Bland's rule
_REFACTOR_EVERY = 50

AT_LOWER, AT_UPPER, BASIC, FREE = 0, 1, 2, 3


@dataclass
class SparseLp:
    """min c.x  subject to  A x = b,  lower <= x <= upper."""

    A: sp.spmatrix
    b: np.ndarray
    c: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    names: list | None = None

    def __post_init__(self):
        self.A = sp.csc_matrix(self.A, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        self.c = np.asarray(self.c, dtype=float)
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        m, n = self.A.shape
        if not (self.b.shape == (m,) and self.c.shape == (n,)
                and self.lower.shape == (n,) and self.upper.shape == (n,)):
            raise ValueError("inconsistent LP dimensions")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")
        row_counts = np.diff(sp.csr_matrix(self.A).indptr)
        if m and np.any(row_counts == 0):
            raise ValueError("A has an empty row")


@dataclass
class LpSolution:
    status: str                       # optimal | infeasible | unbounded | iteration_limit
    x: np.ndarray
    objective: float
    iterations: int
    basis: np.ndarray | None = field(default=None, repr=False)


def residuals(lp: SparseLp, sol: LpSolution) -> tuple[float, float]:
    """(primal equality residual, bound violation), both inf-norms."""
    primal = float(np.max(np.abs(lp.A @ sol.x - lp.b))) if lp.b.size else 0.0
    viol = np.maximum(lp.lower - sol.x, sol.x - lp.upper)
    bound = float(np.max(np.maximum(viol, 0.0))) if sol.x.size else 0.0
    return primal, bound


class _Tableau:
    """Working state for one solve: columns = structurals then artificials."""

    def __init__(self, lp: SparseLp):
        m, n = lp.A.shape
        self.m, self.n = m, n
        start = np.where(np.isfinite(lp.lower), lp.lower,
                         np.where(np.isfinite(lp.upper), lp.upper, 0.0))
        resid = lp.b - lp.A @ start
        art_sign = np.where(resid >= 0.0, 1.0, -1.0)

        self.A = sp.hstack([lp.A, sp.diags(art_sign)], format="csc")
        self.AT = self.A.T.tocsr()
        self.lower = np.concatenate([lp.lower, np.zeros(m)])
        self.upper = np.concatenate([lp.upper, np.full(m, np.inf)])
        self.b = lp.b.copy()

        self.state = np.empty(n + m, dtype=np.int8)
        for j in range(n):
            if np.isfinite(lp.lower[j]):
                self.state[j] = AT_LOWER
            elif np.isfinite(lp.upper[j]):
                self.state[j] = AT_UPPER
            else:
                self.state[j] = FREE
        self.state[n:] = BASIC
        self.x = np.concatenate([start, np.abs(resid)])
        self.basis = np.arange(n, n + m)
        self.binv = np.diag(art_sign)   # inverse of the artificial basis
        self.pivots = 0
        self.since_refactor = 0
        self.degen_streak = 0

    # -- basis maintenance -------------------------------------------------

    def refactor(self) -> bool:
        bmat = self.A[:, self.basis].toarray()
        try:
            self.binv = np.linalg.inv(bmat)
        except np.linalg.LinAlgError:
            return False
        self.since_refactor = 0
        return True

    def recompute_basics(self):
        xn = self.x.copy()
        xn[self.basis] = 0.0
        rhs = self.b - self.A @ xn
        self.x[self.basis] = self.binv @ rhs

    # -- one simplex phase ---------------------------------------------------

    def run(self, cost: np.ndarray, max_iter: int, allow_unbounded: bool):
        """Pivot until optimal for ``cost``; returns a status string."""
        it = 0
        while True:
            if it >= max_iter:
                return "iteration_limit"
            it += 1
            self.pivots += 1

            y = self.binv.T @ cost[self.basis]
            d = cost - self.AT @ y

            use_bland = self.degen_streak >= _DEGEN_STREAK
            enter, direction, best = -1, 0.0, _TOL_COST
            for j in range(self.n + self.m):
                st = self.state[j]
                if st == BASIC:
                    continue
                if self.lower[j] == self.upper[j]:
                    continue   # fixed column can never improve
                dj = d[j]
                if st in (AT_LOWER, FREE) and dj < -best:
                    enter, direction = j, +1.0
                    if use_bland:
                        break
                    best = -dj
                elif st in (AT_UPPER, FREE) and dj > best:
                    enter, direction = j, -1.0
                    if use_bland:
                        break
                    best = dj
            if enter < 0:
                return "optimal"

            w = self.binv @ self.A[:, enter].toarray().ravel()

            # Ratio test: entering moves by t in `direction`; basics move -t*dir*w.
            t_max = self.upper[enter] - self.lower[enter] if self.state[enter] != FREE else np.inf
            leave, leave_bound = -1, 0.0
            for i in range(self.m):
                wi = direction * w[i]
                bi = self.basis[i]
                if wi > _TOL_PIVOT:
                    room = self.x[bi] - self.lower[bi]
                    if np.isfinite(room) and room / wi < t_max - _TOL_RATIO:
                        t_max, leave, leave_bound = room / wi, i, self.lower[bi]
                elif wi < -_TOL_PIVOT:
                    room = self.x[bi] - self.upper[bi]
                    if np.isfinite(room) and room / wi < t_max - _TOL_RATIO:
                        t_max, leave, leave_bound = room / wi, i, self.upper[bi]
            if not np.isfinite(t_max):
                return "unbounded" if allow_unbounded else "iteration_limit"
            t_max = max(t_max, 0.0)

            self.degen_streak = self.degen_streak + 1 if t_max <= _TOL_RATIO else 0

            self.x[self.basis] -= t_max * direction * w
            self.x[enter] += t_max * direction

            if leave < 0:
                # Bound flip: entering variable crossed to its other bound.
                self.state[enter] = AT_UPPER if direction > 0 else AT_LOWER
                continue

            out = self.basis[leave]
            self.x[out] = leave_bound
            self.state[out] = AT_LOWER if leave_bound == self.lower[out] else AT_UPPER
            self.state[enter] = BASIC
            self.basis[leave] = enter

            piv = w[leave]
            if abs(piv) < _TOL_PIVOT or self.since_refactor >= _REFACTOR_EVERY:
                if not self.refactor():
                    return "iteration_limit"
                self.recompute_basics()
            else:
                self.binv[leave, :] /= piv
                for i in range(self.m):
                    if i != leave and w[i] != 0.0:
                        self.binv[i, :] -= w[i] * self.binv[leave, :]
                self.since_refactor += 1


def solve_lp(lp: SparseLp, max_iter: int = 20000) -> LpSolution:
    """Solve to optimality, or classify as infeasible / unbounded.

    Identical inputs produce identical pivot sequences and solutions.
    """
    m, n = lp.A.shape
    if m == 0:
        # Bounds-only problem: each variable sits at whichever bound its cost prefers.
        x = np.where(lp.c > 0, lp.lower, np.where(lp.c < 0, lp.upper,
                     np.where(np.isfinite(lp.lower), lp.lower, 0.0)))
        if np.any(~np.isfinite(x) & (lp.c != 0.0)):
            return LpSolution("unbounded", np.zeros(n), -np.inf, 0)
        x = np.where(np.isfinite(x), x, 0.0)
        return LpSolution("optimal", x, float(lp.c @ x), 0)

    tab = _Tableau(lp)

    phase1_cost = np.concatenate([np.zeros(n), np.ones(m)])
    status = tab.run(phase1_cost, max_iter, allow_unbounded=False)
    if status != "optimal":
        return LpSolution(status, tab.x[:n].copy(), float(lp.c @ tab.x[:n]), tab.pivots)
    art_sum = float(np.sum(tab.x[n:]))
    if art_sum > 1e-7:
        return LpSolution("infeasible", tab.x[:n].copy(), float(lp.c @ tab.x[:n]), tab.pivots)

    # Phase 2: pin every artificial to zero and optimize the true objective.
    tab.upper[n:] = 0.0
    tab.x[n:] = np.where(np.abs(tab.x[n:]) < 1e-12, 0.0, tab.x[n:])
    phase2_cost = np.concatenate([lp.c, np.zeros(m)])
    status = tab.run(phase2_cost, max_iter - tab.pivots, allow_unbounded=True)

    if tab.refactor():
        tab.recompute_basics()
    x = tab.x[:n].copy()
    sol = LpSolution(status, x, float(lp.c @ x), tab.pivots,
                     basis=tab.basis.copy())
    if status == "optimal":
        primal, bound = residuals(lp, sol)
        if primal > 1e-7 or bound > 1e-9:
            sol.status = "iteration_limit"   # numerically unusable basis
    return sol


def dump_mps_like(lp: SparseLp, name: str = "LP") -> str:
    """Fixed-column text dump (MPS-flavoured, equality rows only) for cross-checks."""
    buf = io.StringIO()
    m, n = lp.A.shape
    names = lp.names or [f"X{j}" for j in range(n)]
    buf.write(f"NAME          {name}\n")
    buf.write("ROWS\n N  COST\n")
    for i in range(m):
        buf.write(f" E  R{i}\n")
    buf.write("COLUMNS\n")
    acsc = lp.A.tocsc()
    for j in range(n):
        if lp.c[j] != 0.0:
            buf.write(f"    {names[j]:<10}COST      {lp.c[j]:.12g}\n")
        sl = slice(acsc.indptr[j], acsc.indptr[j + 1])
        for i, v in zip(acsc.indices[sl], acsc.data[sl]):
            buf.write(f"    {names[j]:<10}R{i:<9}{v:.12g}\n")
    buf.write("RHS\n")
    for i in range(m):
        if lp.b[i] != 0.0:
            buf.write(f"    RHS       R{i:<9}{lp.b[i]:.12g}\n")
    buf.write("BOUNDS\n")
    for j in range(n):
        lo, up = lp.lower[j], lp.upper[j]
        if np.isfinite(lo):
            buf.write(f" LO BND       {names[j]:<10}{lo:.12g}\n")
        else:
            buf.write(f" MI BND       {names[j]}\n")
        if np.isfinite(up):
            buf.write(f" UP BND       {names[j]:<10}{up:.12g}\n")
    buf.write("ENDATA\n")
    return buf.getvalue()
