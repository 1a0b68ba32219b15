"""External-solver adapter backed by SciPy's HiGHS bindings."""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from .model import MIN, LinearModel, SolveResult, Status

_STATUS = {0: Status.OPTIMAL, 1: Status.ITERATION_LIMIT, 2: Status.INFEASIBLE, 3: Status.UNBOUNDED}


def solve_highs(model: LinearModel, mip_gap: float = 1e-6, time_limit: float | None = None, **_) -> SolveResult:
    sign = 1.0 if model.obj_sense == MIN else -1.0
    c = sign * model.objective_vector()
    A = model.matrix()
    lo, hi = model.row_bounds()
    if not model.has_binaries:
        eq = lo == hi
        le, ge = np.isfinite(hi) & ~eq, np.isfinite(lo) & ~eq
        A_ub = np.vstack([A[le], -A[ge]])
        b_ub = np.concatenate([hi[le], -lo[ge]])
        res = linprog(c, A_ub=A_ub if A_ub.size else None, b_ub=b_ub if A_ub.size else None,
                      A_eq=A[eq] if eq.any() else None, b_eq=hi[eq] if eq.any() else None,
                      bounds=np.column_stack([model.lb, model.ub]), method="highs")
        status = _STATUS.get(res.status, Status.ITERATION_LIMIT)
        if res.status == 4:
            status = Status.UNBOUNDED if linprog(
                np.zeros_like(c), A_ub=A_ub if A_ub.size else None, b_ub=b_ub if A_ub.size else None,
                A_eq=A[eq] if eq.any() else None, b_eq=hi[eq] if eq.any() else None,
                bounds=np.column_stack([model.lb, model.ub]), method="highs").status == 0 else Status.INFEASIBLE
        if status is not Status.OPTIMAL:
            return SolveResult(status)
        dual = np.zeros(model.n_constraints)
        if le.any():
            dual[le] = res.ineqlin.marginals[: le.sum()]
        if ge.any():
            dual[ge] = -res.ineqlin.marginals[le.sum():]
        if eq.any():
            dual[eq] = res.eqlin.marginals
        return SolveResult(status, sign * res.fun + model.obj_constant, res.x, sign * dual, iterations=res.nit)
    options = {"mip_rel_gap": mip_gap}
    if time_limit is not None:
        options["time_limit"] = time_limit
    cons = [LinearConstraint(A, lo, hi)] if model.n_constraints else []
    res = milp(c, constraints=cons, integrality=model.binary.astype(int),
               bounds=Bounds(model.lb, model.ub), options=options)
    status = _STATUS.get(res.status, Status.ITERATION_LIMIT)
    if res.status == 4:
        # HiGHS could not tell unbounded from infeasible; a zero objective decides.
        probe = milp(np.zeros_like(c), constraints=cons, integrality=model.binary.astype(int),
                     bounds=Bounds(model.lb, model.ub), options=options)
        status = Status.UNBOUNDED if probe.status == 0 else Status.INFEASIBLE
    if res.x is None:
        return SolveResult(status if status is not Status.OPTIMAL else Status.INFEASIBLE)
    x = res.x.copy()
    x[model.binary] = np.round(x[model.binary])
    bound = getattr(res, "mip_dual_bound", math.nan)
    return SolveResult(status, sign * float(c @ x) + model.obj_constant, x,
                       nodes=int(getattr(res, "mip_node_count", 0) or 0),
                       best_bound=sign * bound + model.obj_constant if bound is not None else math.nan)
