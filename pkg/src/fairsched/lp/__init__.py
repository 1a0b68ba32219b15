"""Linear and mixed-binary optimization layer.

``solve(model)`` dispatches on the presence of binaries and on the chosen
backend: ``"bundled"`` (revised simplex + branch and bound, the default) or
``"highs"`` (SciPy's HiGHS interface, for large runs and cross-checks).
"""

from .bnb import solve_milp
from .model import EQ, GE, LE, MAX, MIN, LinearModel, SolveResult, SolverError, Status
from .simplex import Basis, solve_lp

BACKENDS = ("bundled", "highs")


def solve(model: LinearModel, backend: str = "bundled", **kw) -> SolveResult:
    if backend == "bundled":
        return solve_milp(model, **kw) if model.has_binaries else solve_lp(model, **kw)
    if backend == "highs":
        from .highs import solve_highs

        return solve_highs(model, **kw)
    raise ValueError(f"unknown backend {backend!r}; choose from {BACKENDS}")


__all__ = [
    "BACKENDS", "Basis", "EQ", "GE", "LE", "MAX", "MIN", "LinearModel", "SolveResult",
    "SolverError", "Status", "solve", "solve_lp", "solve_milp",
]
