"""Bounded-variable revised simplex (primal and dual) on dense arrays.

Computational form: ``min c.x`` subject to ``A x - s = 0`` with bounds on
both the structural variables ``x`` and the row logicals ``s``.  The basis
inverse is kept explicitly and updated by elementary row operations, with a
fresh inverse every ``refactor_every`` pivots.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy import sparse
from scipy.linalg import LinAlgWarning, blas, lapack, lu_factor, lu_solve

from .model import LinearModel, MIN, SolveResult, Status

BASIC, AT_LB, AT_UB, FREE = 0, 1, 2, 3

FEAS_TOL = 1e-7
PIVOT_TOL = 1e-9
MAX_PIVOTS = 1_000_000
BLAND_AFTER = 10_000
SINGULAR_TOL = 1e-12


@dataclass
class Basis:
    """Snapshot of a simplex basis: basic column per row and nonbasic states."""

    head: NDArray[np.int64]
    state: NDArray[np.int8]

    def copy(self) -> Basis:
        return Basis(self.head.copy(), self.state.copy())


class Simplex:
    """Simplex engine over one constraint matrix; bounds may be changed between solves.

    Args:
        A: ``(m, n)`` constraint matrix.
        c: minimization cost vector of length ``n``.
        lb, ub: bounds on the ``n`` structural variables.
        row_lo, row_hi: bounds on the ``m`` row activities.
    """

    def __init__(self, A, c, lb, ub, row_lo, row_hi, *, feas_tol: float = FEAS_TOL,
                 max_pivots: int = MAX_PIVOTS, refactor_every: int = 64):
        A = np.asarray(A, dtype=float)
        self.m, self.n = A.shape
        m, n = self.m, self.n
        self.A = np.hstack([A, -np.eye(m)]) if m else np.zeros((0, n))
        self.AT = sparse.csr_matrix(self.A.T)  # pricing: y @ A == AT @ y
        self.c = np.concatenate([np.asarray(c, dtype=float), np.zeros(m)])
        self.lb = np.concatenate([np.asarray(lb, dtype=float), np.asarray(row_lo, dtype=float)])
        self.ub = np.concatenate([np.asarray(ub, dtype=float), np.asarray(row_hi, dtype=float)])
        self.feas_tol = feas_tol
        self.dual_tol = 1e-9 + 1e-12 * float(np.abs(self.c).max(initial=0.0))
        self.max_pivots = max_pivots
        self.refactor_every = refactor_every
        self.pivots = 0
        self._pivot_cap = max_pivots  # per solve; pivots counts the engine's lifetime
        self.repairs = 0
        self._degenerate = 0
        self._since_refactor = 0
        self._ger = blas.dger
        self.set_slack_basis()

    # -- basis management -----------------------------------------------------
    def set_slack_basis(self) -> None:
        m, n = self.m, self.n
        state = np.empty(n + m, dtype=np.int8)
        for j in range(n + m):
            state[j] = _rest_state(self.lb[j], self.ub[j])
        head = np.arange(n, n + m)
        state[head] = BASIC
        self.basis = Basis(head, state)
        self.Binv = -np.eye(m)
        self._since_refactor = 0
        self._compute_x()

    def load_basis(self, basis: Basis) -> None:
        self.basis = basis.copy()
        st = self.basis.state
        # nonbasic states must match the current bounds
        for j in np.flatnonzero(st != BASIC):
            st[j] = _fit_state(st[j], self.lb[j], self.ub[j])
        self.refactor()

    def refactor(self) -> None:
        if self.m:
            B = self.A[:, self.basis.head]
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", LinAlgWarning)
                lu = lu_factor(B, check_finite=False)
            diag = np.abs(np.diag(lu[0]))
            if diag.min() <= SINGULAR_TOL * max(1.0, diag.max()):
                # round-off drove the basis singular; restart from the logicals
                self.repairs += 1
                self.set_slack_basis()
                return
            inv, _ = lapack.dgetri(*lu)
            self.Binv = np.asfortranarray(inv)
        self._since_refactor = 0
        self._compute_x()

    def snapshot(self) -> tuple[Basis, NDArray[np.float64], NDArray[np.float64]]:
        return self.basis.copy(), self.Binv.copy(order="F"), self.x.copy()

    def restore(self, snap) -> None:
        basis, Binv, x = snap
        self.basis = basis.copy()
        self.Binv = Binv.copy(order="F")
        self.x = x.copy()

    def set_bounds(self, j: int, lo: float, hi: float) -> None:
        """Change bounds of structural ``j``; a nonbasic value moves with its bound."""
        self.lb[j], self.ub[j] = lo, hi
        st = self.basis.state
        if st[j] != BASIC:
            st[j] = _fit_state(st[j], lo, hi)
            old = self.x[j]
            new = self._nonbasic_value(j)
            if new != old:
                self.x[j] = new
                self.x[self.basis.head] -= self.Binv @ (self.A[:, j] * (new - old))

    def _nonbasic_value(self, j: int) -> float:
        s = self.basis.state[j]
        if s == AT_LB:
            return self.lb[j]
        if s == AT_UB:
            return self.ub[j]
        return 0.0

    def _compute_x(self) -> None:
        st = self.basis.state
        x = np.zeros(self.n + self.m)
        x[st == AT_LB] = self.lb[st == AT_LB]
        x[st == AT_UB] = self.ub[st == AT_UB]
        if self.m:
            x[self.basis.head] = 0.0
            x[self.basis.head] = -(self.Binv @ (self.AT.T @ x))
        self.x = x

    def polished(self) -> NDArray[np.float64]:
        """Current vertex recomputed from a fresh LU with one refinement step.

        The running inverse drifts between refactorizations; callers that
        report a final point use this instead of ``self.x``.
        """
        st = self.basis.state
        x = np.where(st == AT_LB, self.lb, np.where(st == AT_UB, self.ub, 0.0))
        head = self.basis.head
        if self.m:
            x[head] = 0.0
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", LinAlgWarning)
                lu = lu_factor(self.A[:, head], check_finite=False)
                x[head] = lu_solve(lu, -(self.A @ x), check_finite=False)
                x[head] += lu_solve(lu, -(self.A @ x), check_finite=False)
        return x

    def _pivot(self, r: int, j: int, w: NDArray[np.float64], leave_state: int) -> None:
        """Replace basic row ``r`` by column ``j`` whose FTRAN is ``w``.

        The leaving variable becomes nonbasic in ``leave_state`` at that bound.
        """
        piv = w[r]
        row = self.Binv[r] / piv
        coef = w.copy()
        coef[r] -= 1.0
        # Binv <- Binv - coef (x) row, in place
        self.Binv = self._ger(-1.0, coef, row, a=self.Binv, overwrite_a=True)
        head = self.basis.head
        leave = head[r]
        self.basis.state[leave] = leave_state
        self.x[leave] = self.ub[leave] if leave_state == AT_UB else self.lb[leave]
        head[r] = j
        self.basis.state[j] = BASIC
        self.pivots += 1
        self._since_refactor += 1
        if self._since_refactor >= self.refactor_every:
            self.refactor()

    # -- primal simplex -------------------------------------------------------
    def primal(self) -> Status:
        """Composite phase 1 / phase 2 primal simplex from the current basis."""
        tol = self.feas_tol
        lb, ub, A = self.lb, self.ub, self.A
        while True:
            if self.pivots >= self._pivot_cap:
                return Status.ITERATION_LIMIT
            head, st, x = self.basis.head, self.basis.state, self.x
            xB = x[head]
            below = xB < lb[head] - tol
            above = xB > ub[head] + tol
            phase1 = bool(below.any() or above.any())
            if phase1:
                cB = above.astype(float) - below.astype(float)
                cost = np.zeros(self.n + self.m)
                dtol = 1e-9
            else:
                cB = self.c[head]
                cost = self.c
                dtol = self.dual_tol
            y = cB @ self.Binv
            d = cost - self.AT @ y
            d[head] = 0.0
            j, sigma = self._choose_entering(d, dtol)
            if j < 0:
                return Status.INFEASIBLE if phase1 else Status.OPTIMAL
            w = self.Binv @ A[:, j]
            dx = -sigma * w
            r_best, t_best, to_upper = self._primal_ratio(j, dx, above, below)
            if not np.isfinite(t_best):
                if phase1:
                    # cannot happen in exact arithmetic; treat as a stall
                    return Status.INFEASIBLE
                return Status.UNBOUNDED
            self._degenerate += t_best <= 1e-12
            x[j] += sigma * t_best
            x[head] += dx * t_best
            if r_best < 0:
                st[j] = AT_UB if sigma > 0 else AT_LB
                x[j] = ub[j] if sigma > 0 else lb[j]
                self.pivots += 1
                continue
            self._pivot(r_best, j, w, AT_UB if to_upper else AT_LB)

    def _primal_ratio(self, j: int, dx, above, below) -> tuple[int, float, bool]:
        """Harris two-pass ratio test; returns ``(row or -1, step, leaves_at_upper)``."""
        tol = self.feas_tol
        head = self.basis.head
        lbB, ubB = self.lb[head], self.ub[head]
        xB = self.x[head]
        t_flip = self.ub[j] - self.lb[j]
        if not self.m:
            return -1, t_flip, False
        dec = dx < -PIVOT_TOL
        inc = dx > PIVOT_TOL
        # decreasing rows block at lb, or at ub when currently above it
        lim_dec = np.where(above, ubB, np.where(below, -np.inf, lbB))
        lim_inc = np.where(below, lbB, np.where(above, np.inf, ubB))
        m1 = dec & np.isfinite(lim_dec)
        m2 = inc & np.isfinite(lim_inc)
        if not (m1.any() or m2.any()):
            return -1, t_flip, False
        relaxed = np.full(self.m, np.inf)
        exact = np.full(self.m, np.inf)
        relaxed[m1] = (xB[m1] - lim_dec[m1] + tol) / -dx[m1]
        relaxed[m2] = (lim_inc[m2] - xB[m2] + tol) / dx[m2]
        exact[m1] = (xB[m1] - lim_dec[m1]) / -dx[m1]
        exact[m2] = (lim_inc[m2] - xB[m2]) / dx[m2]
        tmax = relaxed.min()
        if t_flip <= tmax:
            return -1, t_flip, False
        cand = np.flatnonzero(exact <= tmax)
        if self._bland:
            r = int(cand[np.argmin(head[cand])])
        else:
            r = int(cand[np.argmax(np.abs(dx[cand]))])
        hit_up = bool(above[r]) if m1[r] else not bool(below[r])
        return r, max(float(exact[r]), 0.0), hit_up

    @property
    def _bland(self) -> bool:
        return self._degenerate >= BLAND_AFTER

    def _choose_entering(self, d: NDArray[np.float64], dtol: float) -> tuple[int, int]:
        st = self.basis.state
        movable = self.ub > self.lb
        up = ((st == AT_LB) | (st == FREE)) & movable & (d < -dtol)
        down = ((st == AT_UB) | (st == FREE)) & movable & (d > dtol)
        score = np.where(up | down, np.abs(d), 0.0)
        if not score.any():
            return -1, 0
        if self._bland:
            j = int(np.flatnonzero(score)[0])
        else:
            j = int(np.argmax(score))
        return j, (1 if up[j] else -1)

    # -- dual simplex ---------------------------------------------------------
    def dual(self) -> Status:
        """Dual simplex from a dual-feasible basis, then a primal clean-up."""
        tol = self.feas_tol
        lb, ub, A = self.lb, self.ub, self.A
        d = None
        while True:
            if self.pivots >= self._pivot_cap:
                return Status.ITERATION_LIMIT
            head, st, x = self.basis.head, self.basis.state, self.x
            xB = x[head]
            infeas = np.maximum(lb[head] - xB, xB - ub[head])
            if not self.m or infeas.max() <= tol:
                return self.primal()
            if self._bland:
                r = int(np.flatnonzero(infeas > tol)[np.argmin(head[infeas > tol])])
            else:
                r = int(np.argmax(infeas))
            going_up = xB[r] < lb[head[r]]
            target = lb[head[r]] if going_up else ub[head[r]]
            if d is None:
                d = self.c - self.AT @ (self.c[head] @ self.Binv)
                d[head] = 0.0
            alpha = self.AT @ self.Binv[r]
            movable = ub > lb
            at_lb = ((st == AT_LB) | (st == FREE)) & movable
            at_ub = ((st == AT_UB) | (st == FREE)) & movable
            if going_up:
                cand = (at_lb & (alpha < -PIVOT_TOL)) | (at_ub & (alpha > PIVOT_TOL))
            else:
                cand = (at_lb & (alpha > PIVOT_TOL)) | (at_ub & (alpha < -PIVOT_TOL))
            cand[head] = False
            idx = np.flatnonzero(cand)
            if idx.size == 0:
                return Status.INFEASIBLE
            # Harris two-pass: bound the step with relaxed reduced costs,
            # then take the largest pivot among columns that fit under it
            dd = np.abs(d[idx])
            wrong = ((st[idx] == AT_LB) & (d[idx] < 0)) | ((st[idx] == AT_UB) & (d[idx] > 0))
            dd[wrong] = 0.0
            aa = np.abs(alpha[idx])
            tmax = ((dd + self.dual_tol) / aa).min()
            ratios = dd / aa
            ties = idx[ratios <= tmax]
            rmin = float(ratios.min())
            if self._bland:
                j = int(ties.min())
            else:
                j = int(ties[np.argmax(np.abs(alpha[ties]))])
            self._degenerate += rmin <= 1e-12
            w = self.Binv @ A[:, j]
            step = (xB[r] - target) / w[r]
            x[j] += step
            x[head] -= w * step
            theta = d[j] / alpha[j]
            self._pivot(r, j, w, AT_LB if going_up else AT_UB)
            if self._since_refactor == 0:
                d = None  # fresh inverse: reprice from scratch
            else:
                d -= theta * alpha
                d[self.basis.head] = 0.0

    # -- results --------------------------------------------------------------
    def solve(self) -> Status:
        self._degenerate = 0
        self._pivot_cap = self.pivots + self.max_pivots
        return self.primal()

    def reoptimize(self) -> Status:
        self._degenerate = 0
        self._pivot_cap = self.pivots + self.max_pivots
        return self.dual()

    def duals(self) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """Row multipliers ``y`` and structural reduced costs for the min form."""
        y = self.c[self.basis.head] @ self.Binv
        d = self.c - self.AT @ y
        d[self.basis.head] = 0.0
        return d[self.n:], d[: self.n]

    @property
    def structural(self) -> NDArray[np.float64]:
        return self.x[: self.n]

    def objective(self) -> float:
        return float(self.c[: self.n] @ self.x[: self.n])


def _rest_state(lo: float, hi: float) -> int:
    if np.isfinite(lo):
        return AT_LB
    if np.isfinite(hi):
        return AT_UB
    return FREE


def _fit_state(state: int, lo: float, hi: float) -> int:
    if state == AT_LB and np.isfinite(lo):
        return AT_LB
    if state == AT_UB and np.isfinite(hi):
        return AT_UB
    return _rest_state(lo, hi)


def simplex_for(model: LinearModel, **kw) -> tuple[Simplex, float]:
    """Engine for ``model``; returns it with the objective sign (+1 min, -1 max)."""
    sign = 1.0 if model.obj_sense == MIN else -1.0
    row_lo, row_hi = model.row_bounds()
    eng = Simplex(model.matrix(), sign * model.objective_vector(), model.lb, model.ub, row_lo, row_hi, **kw)
    return eng, sign


def result_from(eng: Simplex, status: Status, model: LinearModel, sign: float) -> SolveResult:
    if status is not Status.OPTIMAL:
        return SolveResult(status, iterations=eng.pivots)
    x = eng.polished()[: eng.n]
    y, d = eng.duals()
    return SolveResult(
        Status.OPTIMAL,
        objective_value=sign * float(eng.c[: eng.n] @ x) + model.obj_constant,
        primal=x,
        dual=sign * y,
        reduced_costs=sign * d,
        iterations=eng.pivots,
        basis=eng.basis.copy(),
    )


def solve_lp(model: LinearModel, basis: Basis | None = None, **kw) -> SolveResult:
    """Solve a continuous LP with the bundled simplex.

    Binary markers are rejected; use :func:`fairsched.lp.solve_milp` instead.
    """
    if model.has_binaries:
        raise ValueError("solve_lp received binary variables; use solve_milp")
    eng, sign = simplex_for(model, **kw)
    if basis is not None:
        eng.load_basis(basis)
    status = eng.solve()
    return result_from(eng, status, model, sign)
