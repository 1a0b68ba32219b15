"""Best-bound branch and bound over binary variables.

Node relaxations are re-solved with the dual simplex from the parent's
optimal basis.  Branching picks the most fractional binary, lowest id on
ties.  Among open nodes with equal bounds the deepest (then newest) is
expanded first.
"""

from __future__ import annotations

import heapq
import itertools
from collections import OrderedDict
import logging
import math
from dataclasses import dataclass

import numpy as np

from .model import LinearModel, SolveResult, Status
from .simplex import Simplex, simplex_for

log = logging.getLogger(__name__)

INT_TOL = 1e-6
MIP_GAP = 1e-6
MAX_NODES = 100_000
SNAPSHOT_BYTES = 64 * 2**20  # memory for cached basis inverses of open nodes


@dataclass(order=True)
class _Node:
    bound: float
    neg_depth: int
    neg_seq: int
    fixings: tuple = ()
    basis: object = None
    x: np.ndarray = None


def solve_milp(model: LinearModel, *, int_tol: float = INT_TOL, mip_gap: float = MIP_GAP,
               max_nodes: int = MAX_NODES, **lp_kw) -> SolveResult:
    """Solve a mixed-binary model to within ``mip_gap`` relative optimality.

    Returns ``Status.ITERATION_LIMIT`` when the node budget runs out or a
    node LP exhausts its pivot budget; the best incumbent (if any) is still
    attached as ``primal``.
    """
    eng, sign = simplex_for(model, **lp_kw)
    binaries = np.flatnonzero(model.binary)
    status = eng.solve()
    if status is not Status.OPTIMAL:
        return SolveResult(status, iterations=eng.pivots, nodes=1)
    if binaries.size == 0:
        from .simplex import result_from
        return result_from(eng, status, model, sign)

    root_lb, root_ub = eng.lb.copy(), eng.ub.copy()
    best_obj = math.inf
    lost_bound = math.inf
    best_x: np.ndarray | None = None
    seq = itertools.count()
    heap: list[_Node] = []
    # recent node factorizations, so popping a fresh child skips a refactor
    snaps: OrderedDict[int, tuple] = OrderedDict()
    max_snaps = max(4, SNAPSHOT_BYTES // max(1, 8 * eng.m * eng.m))

    def cutoff() -> float:
        return best_obj - mip_gap * max(1.0, abs(best_obj)) if best_obj < math.inf else math.inf

    def consider(obj: float, x: np.ndarray, fixings: tuple, basis) -> None:
        nonlocal best_obj, best_x
        if obj >= cutoff():
            return
        frac = np.abs(x[binaries] - np.round(x[binaries]))
        if frac.max(initial=0.0) <= int_tol:
            best_obj, best_x = obj, eng.polished()[: eng.n]
            return
        node = _Node(obj, -len(fixings), -next(seq), fixings, basis, x.copy())
        heapq.heappush(heap, node)
        snaps[node.neg_seq] = eng.snapshot()
        if len(snaps) > max_snaps:
            snaps.popitem(last=False)

    consider(eng.objective(), eng.structural, (), eng.basis.copy())
    nodes = 1
    while heap:
        node = heapq.heappop(heap)
        if node.bound >= cutoff():
            heap.clear()
            break
        if nodes >= max_nodes:
            heapq.heappush(heap, node)
            break
        xb = node.x[binaries]
        frac = np.minimum(xb - np.floor(xb), np.ceil(xb) - xb)
        k = int(np.argmax(frac))  # first maximal index = lowest variable id
        var = int(binaries[k])
        # reset to the node's bounds
        eng.lb[:] = root_lb
        eng.ub[:] = root_ub
        for j, v in node.fixings:
            eng.lb[j] = eng.ub[j] = v
        parent = snaps.pop(node.neg_seq, None)
        if parent is None:
            eng.load_basis(node.basis)
            parent = eng.snapshot()
        for val in (0.0, 1.0):
            eng.restore(parent)
            eng.set_bounds(var, val, val)
            st = eng.reoptimize()
            nodes += 1
            if st is Status.OPTIMAL:
                consider(eng.objective(), eng.structural, node.fixings + ((var, val),), eng.basis.copy())
            elif st is Status.ITERATION_LIMIT:
                # the subtree is unexplored, so optimality can no longer be proven
                log.warning("node LP hit the pivot limit; node dropped")
                lost_bound = min(lost_bound, node.bound)
            eng.lb[var], eng.ub[var] = root_lb[var], root_ub[var]
        if nodes % 1000 < 2:
            log.debug("bnb nodes=%d open=%d incumbent=%g", nodes, len(heap), best_obj)

    bound = min(min((n.bound for n in heap), default=best_obj), lost_bound)
    unfinished = bool(heap) or lost_bound < math.inf
    if best_x is None:
        status = Status.ITERATION_LIMIT if unfinished else Status.INFEASIBLE
        return SolveResult(status, iterations=eng.pivots, nodes=nodes, best_bound=sign * bound)
    x = best_x.copy()
    x[binaries] = np.round(x[binaries])
    return SolveResult(
        Status.ITERATION_LIMIT if unfinished else Status.OPTIMAL,
        objective_value=sign * float(eng.c[: eng.n] @ x) + model.obj_constant,
        primal=x,
        iterations=eng.pivots,
        nodes=nodes,
        best_bound=sign * min(bound, best_obj) + model.obj_constant,
    )
