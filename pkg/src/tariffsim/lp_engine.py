"""Bounded-variable revised simplex and a lexicographic second stage.

Every row ``a_i x (<=|=|>=) b_i`` gets a logical variable ``r_i = a_i x`` whose
bounds encode the comparison, so the working system is ``A x - r = 0`` with
all variables boxed.  The basis is never stored as an explicit inverse: only
the block of structural basic columns restricted to rows whose logical is
nonbasic is factorized, which stays small for the sparse, mostly-slack
programs built in this package.

Phase 1 minimizes the sum of bound infeasibilities of the basic variables and
uses a long-step ratio test (breakpoints are passed while the infeasibility
keeps decreasing), so a single entering variable can repair many rows at once.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import lu_factor, lu_solve

from .errors import RejectedInput, SolverError

PIVOT_TOL = 1e-9
BREAKDOWN_TOL = 1e-11
PRIMAL_TOL = 1e-9
DUAL_TOL = 1e-9
ZERO_STEP = 1e-12
# programs with at most this many matrix entries are handled densely
DENSE_LIMIT = 200_000


class Sense(str, enum.Enum):
    LE = "<="
    GE = ">="
    EQ = "="


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


class LinearProgram:
    """Minimize ``c x`` over boxed variables and sparse linear rows."""

    def __init__(self, c=(), lower=None, upper=None, names=None):
        c = np.asarray(c, dtype=float)
        self.c = c.copy()
        self.lower = np.zeros(c.size) if lower is None else np.asarray(lower, dtype=float).copy()
        self.upper = np.full(c.size, np.inf) if upper is None else np.asarray(upper, dtype=float).copy()
        self.names = list(names) if names is not None else None
        self._row_cols: list[np.ndarray] = []
        self._row_vals: list[np.ndarray] = []
        self.senses: list[Sense] = []
        self.rhs: list[float] = []

    @property
    def n(self) -> int:
        return self.c.size

    @property
    def row_count(self) -> int:
        return len(self.rhs)

    def add_variables(self, cost, lower=0.0, upper=np.inf, names=None) -> np.ndarray:
        cost = np.atleast_1d(np.asarray(cost, dtype=float))
        k = cost.size
        start = self.n
        self.c = np.concatenate([self.c, cost])
        self.lower = np.concatenate([self.lower, np.broadcast_to(np.asarray(lower, float), (k,))])
        self.upper = np.concatenate([self.upper, np.broadcast_to(np.asarray(upper, float), (k,))])
        if self.names is not None:
            self.names.extend(names if names is not None else [f"x{start + i}" for i in range(k)])
        return np.arange(start, start + k)

    def add_row(self, indices, coefs, sense, rhs) -> int:
        cols = np.asarray(indices, dtype=np.int64).ravel()
        vals = np.broadcast_to(np.asarray(coefs, dtype=float), cols.shape).copy()
        self._row_cols.append(cols)
        self._row_vals.append(vals)
        self.senses.append(Sense(sense))
        self.rhs.append(float(rhs))
        return len(self.rhs) - 1

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray, Sense, float]:
        return self._row_cols[i], self._row_vals[i], self.senses[i], self.rhs[i]

    def copy(self) -> LinearProgram:
        other = LinearProgram(self.c, self.lower, self.upper, self.names)
        other._row_cols = list(self._row_cols)
        other._row_vals = list(self._row_vals)
        other.senses = list(self.senses)
        other.rhs = list(self.rhs)
        return other

    def matrix(self) -> sp.csr_matrix:
        m = self.row_count
        lengths = [len(c) for c in self._row_cols]
        indptr = np.concatenate([[0], np.cumsum(lengths, dtype=np.int64)])
        cols = np.concatenate(self._row_cols) if m else np.zeros(0, np.int64)
        vals = np.concatenate(self._row_vals) if m else np.zeros(0)
        A = sp.csr_matrix((vals, cols, indptr), shape=(m, self.n))
        A.sum_duplicates()
        return A

    def row_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        rhs = np.asarray(self.rhs, dtype=float)
        senses = np.array([s.value for s in self.senses])
        lo = np.where(senses == Sense.LE.value, -np.inf, rhs)
        hi = np.where(senses == Sense.GE.value, np.inf, rhs)
        return lo, hi

    def validate(self) -> None:
        if self.lower.shape != self.c.shape or self.upper.shape != self.c.shape:
            raise RejectedInput("bound vectors must match the objective length")
        if not np.all(np.isfinite(self.c)):
            raise RejectedInput("objective coefficients must be finite")
        if np.any(self.lower > self.upper):
            raise RejectedInput("lower bound exceeds upper bound")
        if np.any(self.lower == np.inf) or np.any(self.upper == -np.inf):
            raise RejectedInput("bounds exclude every finite value")
        for cols, vals in zip(self._row_cols, self._row_vals):
            if cols.size and (cols.min() < 0 or cols.max() >= self.n):
                raise RejectedInput("row references a column outside the program")
            if not np.all(np.isfinite(vals)):
                raise RejectedInput("row coefficients must be finite")
        if not np.all(np.isfinite(self.rhs)):
            raise RejectedInput("right-hand sides must be finite")

    def evaluate(self, x) -> float:
        return float(self.c @ np.asarray(x, dtype=float))


@dataclass(frozen=True)
class Basis:
    """Warm-start information: basic structural columns, tight rows, and the
    values of all structural and logical variables (in that order)."""

    structural: tuple[int, ...]
    tight_rows: tuple[int, ...]
    values: np.ndarray


@dataclass
class LpSolution:
    status: Status
    x: np.ndarray
    duals: np.ndarray
    reduced_costs: np.ndarray
    objective: float
    iterations: int = 0
    residuals: dict = field(default_factory=dict)
    primary_objective: float | None = None
    basis: Basis | None = field(default=None, repr=False)

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


class _Simplex:
    def __init__(self, lp: LinearProgram, basis: Basis | None = None):
        lp.validate()
        self.n = n = lp.n
        self.m = m = lp.row_count
        A = lp.matrix()
        # tiny programs spend more time in sparse bookkeeping than in arithmetic
        self.dense = n * m <= DENSE_LIMIT
        if self.dense:
            self.A = A.toarray()
            self.At = self.A.T
        else:
            self.A = A
            self.Ac = A.tocsc()
            self.At = A.T.tocsr()
        row_lo, row_hi = lp.row_bounds()
        self.lb = np.concatenate([lp.lower, row_lo])
        self.ub = np.concatenate([lp.upper, row_hi])
        self.cost = np.concatenate([lp.c, np.zeros(m)])
        self.cscale = 1.0 + (np.max(np.abs(lp.c)) if n else 0.0)
        self.ftol = PRIMAL_TOL * (1.0 + np.abs(np.where(np.isfinite(self.lb), self.lb, 0.0)))
        self.ftol_u = PRIMAL_TOL * (1.0 + np.abs(np.where(np.isfinite(self.ub), self.ub, 0.0)))
        self.max_iter = 50 * (n + m)
        self.iterations = 0

        self.x = np.zeros(n + m)
        if basis is None:
            self.S: list[int] = []
            self.R: list[int] = []
            xs = np.where(np.isfinite(lp.lower), lp.lower, np.where(np.isfinite(lp.upper), lp.upper, 0.0))
            self.x[:n] = xs
        else:
            self.S = sorted(basis.structural)
            self.R = sorted(basis.tight_rows)
            self.x[: basis.values.size] = basis.values[: n + m]
        self.is_basic = np.zeros(n + m, dtype=bool)
        self.is_basic[self.S] = True
        logical_basic = np.ones(m, dtype=bool)
        logical_basic[self.R] = False
        self.is_basic[n:] = logical_basic

    # -- linear algebra on the reduced basis block ------------------------------

    def _factor(self):
        S, R = self.S, self.R
        k = len(S)
        if k != len(R):
            raise SolverError("basis bookkeeping lost consistency")
        if k == 0:
            self.lu = None
            return
        if self.dense:
            K = self.A[np.ix_(R, S)]
        else:
            K = self.Ac[:, S].toarray()[R, :]
        with np.errstate(all="ignore"):
            lu, piv = lu_factor(K, check_finite=False)
        diag = np.abs(np.diag(lu))
        if not np.all(np.isfinite(diag)) or diag.min() < BREAKDOWN_TOL * max(1.0, diag.max()):
            raise SolverError(
                f"numerical breakdown: basis pivot {diag.min():.3e} below {BREAKDOWN_TOL:g}"
            )
        self.lu = (lu, piv)

    def _basic_values(self):
        n = self.n
        S, R = self.S, self.R
        xs = self.x[:n].copy()
        if S:
            xs[S] = 0.0
            t = self.A @ xs
            rhs = self.x[n:][R] - t[R]
            xs[S] = lu_solve(self.lu, rhs, check_finite=False)
        self.x[:n] = xs
        act = self.A @ xs
        lmask = self.is_basic[n:]
        self.x[n:][lmask] = act[lmask]

    def _ftran(self, q: int) -> np.ndarray:
        """Column of B^-1 a_q, laid out over all variables (zero off-basis)."""
        n, m = self.n, self.m
        a = np.zeros(m)
        if q < n and self.dense:
            a[:] = self.A[:, q]
        elif q < n:
            lo, hi = self.Ac.indptr[q], self.Ac.indptr[q + 1]
            a[self.Ac.indices[lo:hi]] = self.Ac.data[lo:hi]
        else:
            a[q - n] = -1.0
        alpha = np.zeros(n + m)
        z = np.zeros(n)
        if self.S:
            aS = lu_solve(self.lu, a[self.R], check_finite=False)
            z[self.S] = aS
            alpha[self.S] = aS
        lmask = self.is_basic[n:]
        full = self.A @ z
        alpha[n:][lmask] = full[lmask] - a[lmask]
        return alpha

    def _btran(self, cB: np.ndarray) -> np.ndarray:
        """Row multipliers y with y^T B = c_B^T; cB is laid out over all variables."""
        n = self.n
        lmask = self.is_basic[n:]
        y = np.zeros(self.m)
        y[lmask] = -cB[n:][lmask]
        if self.S:
            w = self.At @ y
            rhs = cB[self.S] - w[self.S]
            y[self.R] = lu_solve(self.lu, rhs, trans=1, check_finite=False)
        return y

    def _reduced_costs(self, cost: np.ndarray, y: np.ndarray) -> np.ndarray:
        d = np.empty(self.n + self.m)
        d[: self.n] = cost[: self.n] - self.At @ y
        d[self.n :] = cost[self.n :] + y
        return d

    # -- main loop ------------------------------------------------------------

    def run(self) -> Status:
        n = self.n
        degenerate = 0
        bland = False
        lb, ub = self.lb, self.ub
        # a bound flip keeps the basis, so in phase 2 the factorization and the
        # reduced costs of the previous iteration stay valid
        basis_changed = True
        was_phase2 = False
        while True:
            if self.iterations > self.max_iter:
                raise SolverError(f"iteration cap {self.max_iter} exceeded")
            if basis_changed:
                self._factor()
            self._basic_values()
            x = self.x
            below = self.is_basic & (x < lb - self.ftol)
            above = self.is_basic & (x > ub + self.ftol_u)
            phase1 = bool(below.any() or above.any())
            if phase1:
                cB = np.zeros(n + self.m)
                cB[below] = -1.0
                cB[above] = 1.0
                dtol = DUAL_TOL
                y = self._btran(cB)
                d = self._reduced_costs(cB, y)
                d[self.is_basic] = 0.0
            else:
                cB = self.cost
                dtol = 0.5 * DUAL_TOL * self.cscale
                if basis_changed or not was_phase2:
                    y = self._btran(cB)
                    d = self._reduced_costs(cB, y)
                    d[self.is_basic] = 0.0
            was_phase2 = not phase1
            basis_changed = False

            can_inc = (x < ub) & ~self.is_basic
            can_dec = (x > lb) & ~self.is_basic
            eligible = (can_inc & (d < -dtol)) | (can_dec & (d > dtol))
            if not eligible.any():
                if phase1:
                    return Status.INFEASIBLE
                self.y = y
                self.d = d
                return Status.OPTIMAL
            cand = np.flatnonzero(eligible)
            if bland:
                q = int(cand[0])
            else:
                q = int(cand[np.argmax(np.abs(d[cand]))])
            direction = 1.0 if d[q] < 0 else -1.0

            alpha = self._ftran(q)
            step, leave, leave_value = self._ratio_test(q, direction, alpha, abs(d[q]), phase1, below, above, bland)
            if step is None:
                if phase1:
                    raise SolverError("phase 1 ray without a stopping breakpoint")
                return Status.UNBOUNDED

            self.iterations += 1
            if step <= ZERO_STEP:
                degenerate += 1
                if degenerate > 10 * n:
                    bland = True
            else:
                degenerate = 0
                bland = False

            x[q] += direction * step
            if leave is None:
                # bound flip of the entering variable
                x[q] = ub[q] if direction > 0 else lb[q]
                continue
            x[leave] = leave_value
            self._swap(q, leave)
            basis_changed = True

    def _ratio_test(self, q, direction, alpha, slope_mag, phase1, below, above, bland):
        basic = np.flatnonzero(self.is_basic & (np.abs(alpha) > PIVOT_TOL))
        rate = -direction * alpha[basic]
        v = self.x[basic]
        lo, hi = self.lb[basic], self.ub[basic]
        inc = rate > 0
        b_below = below[basic]
        b_above = above[basic]

        # hard stops: a feasible basic variable reaching a bound, or an
        # infeasible one crossing its whole feasible range
        with np.errstate(invalid="ignore", divide="ignore"):
            t_hi = np.where(inc & ~b_above, (hi - v) / rate, np.inf)
            t_lo = np.where(~inc & ~b_below, (lo - v) / rate, np.inf)
        t_hi = np.where(np.isnan(t_hi), np.inf, np.maximum(t_hi, 0.0))
        t_lo = np.where(np.isnan(t_lo), np.inf, np.maximum(t_lo, 0.0))
        hard = np.minimum(t_hi, t_lo)
        hard_at_hi = t_hi <= t_lo

        span = self.ub[q] - self.lb[q]
        t_hard = hard.min() if hard.size else np.inf
        if span <= t_hard:
            t_hard_choice = None
            t_hard = span
        else:
            t_hard_choice = self._pick(basic, hard, np.abs(rate), t_hard, bland)

        if phase1:
            with np.errstate(invalid="ignore", divide="ignore"):
                t_bp = np.where(
                    b_below & inc, (lo - v) / rate, np.where(b_above & ~inc, (hi - v) / rate, np.inf)
                )
            order = np.flatnonzero(np.isfinite(t_bp) & (t_bp <= t_hard))
            if order.size:
                keys = np.lexsort((basic[order], -np.abs(rate[order]), t_bp[order]))
                order = order[keys]
                slope = -slope_mag
                for j in order:
                    slope += abs(rate[j])
                    if slope >= -DUAL_TOL * 1e-3:
                        var = int(basic[j])
                        bound = lo[j] if b_below[j] else hi[j]
                        return max(float(t_bp[j]), 0.0), var, bound

        if not math.isfinite(t_hard):
            return None, None, None
        if t_hard_choice is None:
            return float(t_hard), None, None
        j = t_hard_choice
        bound = hi[j] if hard_at_hi[j] else lo[j]
        return float(t_hard), int(basic[j]), bound

    @staticmethod
    def _pick(basic, t, weight, t_min, bland):
        ties = np.flatnonzero(t <= t_min + ZERO_STEP * (1.0 + t_min))
        if bland:
            return int(ties[np.argmin(basic[ties])])
        best = ties[np.argmax(weight[ties])]
        return int(best)

    def _swap(self, q: int, leave: int):
        n = self.n
        self.is_basic[q] = True
        self.is_basic[leave] = False
        if q < n:
            self.S.append(q)
        else:
            self.R.remove(q - n)
        if leave < n:
            self.S.remove(leave)
        else:
            self.R.append(leave - n)
        self.S.sort()
        self.R.sort()


def _residuals(lp: LinearProgram, x: np.ndarray, y: np.ndarray, d: np.ndarray, objective: float) -> dict:
    A = lp.matrix()
    act = A @ x
    row_lo, row_hi = lp.row_bounds()
    rhs_scale = 1.0 + max(
        np.max(np.abs(lp.rhs), initial=0.0),
        np.max(np.abs(lp.lower[np.isfinite(lp.lower)]), initial=0.0),
        np.max(np.abs(lp.upper[np.isfinite(lp.upper)]), initial=0.0),
    )
    primal = max(
        np.max(row_lo - act, initial=0.0),
        np.max(act - row_hi, initial=0.0),
        np.max(lp.lower - x, initial=0.0),
        np.max(x - lp.upper, initial=0.0),
    )
    tol = PRIMAL_TOL * rhs_scale
    at_lo = x <= lp.lower + tol
    at_hi = x >= lp.upper - tol
    dual_viol = np.where(at_lo & at_hi, 0.0, np.where(at_lo, -d, np.where(at_hi, d, np.abs(d))))
    r_lo = act <= row_lo + tol
    r_hi = act >= row_hi - tol
    # logical reduced cost equals y: >= 0 at a lower row bound, <= 0 at an upper one
    row_viol = np.where(r_lo & r_hi, 0.0, np.where(r_lo, -y, np.where(r_hi, y, np.abs(y))))
    dual = max(np.max(dual_viol, initial=0.0), np.max(row_viol, initial=0.0))

    with np.errstate(invalid="ignore"):
        gap_x = np.minimum(np.abs(x - lp.lower), np.abs(x - lp.upper))
        gap_r = np.minimum(np.abs(act - row_lo), np.abs(act - row_hi))
    gap_x = np.where(np.isfinite(gap_x), gap_x, np.abs(x))
    gap_r = np.where(np.isfinite(gap_r), gap_r, np.abs(act))
    comp = max(np.max(np.abs(d) * gap_x, initial=0.0), np.max(np.abs(y) * gap_r, initial=0.0))

    def bound_term(coef, lo, hi, val):
        pick = np.where(coef > 0, lo, hi)
        pick = np.where(np.isfinite(pick), pick, val)
        return float(np.sum(coef * pick))

    dual_obj = bound_term(y, row_lo, row_hi, act) + bound_term(d, lp.lower, lp.upper, x)
    return {
        "primal": float(primal),
        "dual": float(dual),
        "complementarity": float(comp),
        "dual_objective": dual_obj,
        "gap": abs(objective - dual_obj) / (1.0 + abs(objective)),
        "rhs_scale": rhs_scale,
        "c_scale": 1.0 + float(np.max(np.abs(lp.c), initial=0.0)),
    }


def _check(res: dict) -> None:
    problems = []
    if res["primal"] > PRIMAL_TOL * res["rhs_scale"]:
        problems.append(f"primal residual {res['primal']:.3e}")
    if res["dual"] > DUAL_TOL * res["c_scale"]:
        problems.append(f"dual residual {res['dual']:.3e}")
    if res["complementarity"] > 1e-8 * res["rhs_scale"]:
        problems.append(f"complementarity {res['complementarity']:.3e}")
    if res["gap"] > 1e-8:
        problems.append(f"duality gap {res['gap']:.3e}")
    if problems:
        raise SolverError("optimality certificate failed: " + ", ".join(problems))


def solve(lp: LinearProgram, basis: Basis | None = None, check: bool = True) -> LpSolution:
    """Solve ``lp`` to optimality, or report infeasible/unbounded.

    Pricing is Dantzig's largest reduced cost, switching to Bland's smallest
    index rule after ``10 n`` consecutive degenerate pivots.  All ties break on
    the lowest index, so equal inputs give bit-identical outputs.
    """
    n, m = lp.n, lp.row_count
    simplex = _Simplex(lp, basis)
    status = simplex.run()
    x = simplex.x[:n].copy()
    if status is not Status.OPTIMAL:
        return LpSolution(status, x, np.zeros(m), np.zeros(n), math.nan, simplex.iterations)
    y = simplex.y
    d = lp.c - simplex.A.T @ y
    objective = float(lp.c @ x)
    res = _residuals(lp, x, y, d, objective)
    if check:
        _check(res)
    basis_out = Basis(tuple(simplex.S), tuple(simplex.R), simplex.x.copy())
    return LpSolution(status, x, y, d, objective, simplex.iterations, res, basis=basis_out)


def solve_lexicographic(
    lp: LinearProgram,
    secondary,
    epsilon: float | None = None,
    check: bool = True,
    epsilon_rel: float = 1e-7,
) -> LpSolution:
    """Optimize ``lp``, then ``secondary`` over the (near-)optimal face.

    The first objective is held by one extra row ``c x <= z* + epsilon``;
    ``epsilon`` defaults to ``epsilon_rel * (1 + |z*|)``.  The returned duals
    cover the original rows plus that extra row, last.
    """
    secondary = np.asarray(secondary, dtype=float)
    if secondary.shape != (lp.n,):
        raise RejectedInput("secondary objective must have one entry per variable")
    first = solve(lp, check=check)
    if not first.optimal:
        return first
    z = first.objective
    eps = epsilon_rel * (1.0 + abs(z)) if epsilon is None else float(epsilon)
    stage2 = lp.copy()
    stage2.c = secondary.copy()
    nz = np.flatnonzero(lp.c)
    stage2.add_row(nz, lp.c[nz], Sense.LE, z + eps)
    second = solve(stage2, basis=first.basis, check=check)
    if not second.optimal:
        raise SolverError(f"second stage ended {second.status.value} after an optimal first stage")
    second.primary_objective = float(lp.c @ second.x)
    return second


def write_lp_file(lp: LinearProgram, path) -> None:
    """Dump ``lp`` in CPLEX LP text format for cross-checking with other tools."""
    names = lp.names or [f"x{j}" for j in range(lp.n)]

    def terms(cols, vals):
        if len(cols) == 0:
            return "0 " + names[0] if names else "0"
        return " ".join(f"{'+' if v >= 0 else '-'} {abs(v)!r} {names[c]}" for c, v in zip(cols, vals))

    lines = ["\\ written by tariffsim", "Minimize"]
    nz = np.flatnonzero(lp.c)
    lines.append(" obj: " + terms(nz, lp.c[nz]))
    lines.append("Subject To")
    for i in range(lp.row_count):
        cols, vals, sense, rhs = lp.row(i)
        op = {"<=": "<=", ">=": ">=", "=": "="}[sense.value]
        lines.append(f" c{i}: {terms(cols, vals)} {op} {rhs!r}")
    lines.append("Bounds")
    for j in range(lp.n):
        lo, hi = lp.lower[j], lp.upper[j]
        if lo == -np.inf and hi == np.inf:
            lines.append(f" {names[j]} free")
        elif lo == hi:
            lines.append(f" {names[j]} = {lo!r}")
        else:
            lo_s = "-inf" if lo == -np.inf else repr(float(lo))
            hi_s = "+inf" if hi == np.inf else repr(float(hi))
            lines.append(f" {lo_s} <= {names[j]} <= {hi_s}")
    lines.append("End")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
