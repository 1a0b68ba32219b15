"""Solver-agnostic linear / mixed-binary model container."""

from __future__ import annotations

import enum
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Union

import numpy as np
from numpy.typing import NDArray

Coeffs = Union[Mapping[int, float], Iterable[tuple[int, float]]]

LE, EQ, GE = "<=", "==", ">="
MIN, MAX = "min", "max"


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration_limit"


class SolverError(RuntimeError):
    """A solve did not end in the status the caller needed."""

    def __init__(self, message: str, result: SolveResult | None = None):
        super().__init__(message)
        self.result = result


@dataclass
class SolveResult:
    """Outcome of an LP or MILP solve.

    ``dual`` holds shadow prices ``d objective / d rhs`` in the model's own
    objective sense; ``reduced_costs`` likewise per variable.  Both are
    ``None`` for MILP solves.
    """

    status: Status
    objective_value: float = math.nan
    primal: NDArray[np.float64] | None = None
    dual: NDArray[np.float64] | None = None
    reduced_costs: NDArray[np.float64] | None = None
    iterations: int = 0
    nodes: int = 0
    best_bound: float = math.nan
    basis: object = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.status is Status.OPTIMAL

    def value(self, var: int | NDArray) -> float | NDArray:
        if self.primal is None:
            raise SolverError(f"no primal solution (status {self.status.value})", self)
        return self.primal[var]


class LinearModel:
    """Variables with bounds, linear rows and a linear objective.

    Variables and rows are referenced by the integer ids returned from
    :meth:`add_var` / :meth:`add_constraint`.
    """

    def __init__(self, name: str = "model"):
        self.name = name
        self._lb: list[float] = []
        self._ub: list[float] = []
        self._binary: list[bool] = []
        self._var_names: list[str] = []
        self._row_i: list[int] = []
        self._row_j: list[int] = []
        self._row_v: list[float] = []
        self._sense: list[str] = []
        self._rhs: list[float] = []
        self._row_names: list[str] = []
        self._obj: dict[int, float] = {}
        self.obj_sense = MIN
        self.obj_constant = 0.0

    # -- construction -------------------------------------------------------
    def add_var(self, lb: float = 0.0, ub: float = math.inf, binary: bool = False, name: str | None = None) -> int:
        if binary:
            lb, ub = max(lb, 0.0), min(ub, 1.0)
        if lb > ub:
            raise ValueError(f"variable {name!r}: lb {lb} > ub {ub}")
        self._lb.append(float(lb))
        self._ub.append(float(ub))
        self._binary.append(bool(binary))
        self._var_names.append(name or f"v{len(self._lb) - 1}")
        return len(self._lb) - 1

    def set_bounds(self, var: int, lb: float, ub: float) -> None:
        if self._binary[var]:
            lb, ub = max(lb, 0.0), min(ub, 1.0)
        if lb > ub:
            raise ValueError(f"variable {self._var_names[var]!r}: lb {lb} > ub {ub}")
        self._lb[var], self._ub[var] = float(lb), float(ub)

    def add_vars(self, count: int, lb: float = 0.0, ub: float = math.inf, binary: bool = False,
                 name: str = "v") -> NDArray[np.int64]:
        return np.array([self.add_var(lb, ub, binary, f"{name}_{k}") for k in range(count)], dtype=np.int64)

    def add_constraint(self, coeffs: Coeffs, sense: str, rhs: float, name: str | None = None) -> int:
        if sense not in (LE, EQ, GE):
            raise ValueError(f"unknown sense {sense!r}")
        r = len(self._rhs)
        items = coeffs.items() if isinstance(coeffs, Mapping) else coeffs
        n = len(self._lb)
        for j, v in items:
            j = int(j)
            if not 0 <= j < n:
                raise KeyError(f"constraint {name!r} references undeclared variable {j}")
            if v != 0.0:
                self._row_i.append(r)
                self._row_j.append(j)
                self._row_v.append(float(v))
        self._sense.append(sense)
        self._rhs.append(float(rhs))
        self._row_names.append(name or f"c{r}")
        return r

    def set_objective(self, coeffs: Coeffs, sense: str = MIN, constant: float = 0.0) -> None:
        if sense not in (MIN, MAX):
            raise ValueError(f"unknown objective sense {sense!r}")
        items = coeffs.items() if isinstance(coeffs, Mapping) else coeffs
        obj: dict[int, float] = {}
        for j, v in items:
            if not 0 <= int(j) < len(self._lb):
                raise KeyError(f"objective references undeclared variable {j}")
            obj[int(j)] = obj.get(int(j), 0.0) + float(v)
        self._obj = obj
        self.obj_sense = sense
        self.obj_constant = float(constant)

    # -- inspection ---------------------------------------------------------
    @property
    def n_vars(self) -> int:
        return len(self._lb)

    @property
    def n_constraints(self) -> int:
        return len(self._rhs)

    @property
    def has_binaries(self) -> bool:
        return any(self._binary)

    @property
    def lb(self) -> NDArray[np.float64]:
        return np.array(self._lb)

    @property
    def ub(self) -> NDArray[np.float64]:
        return np.array(self._ub)

    @property
    def binary(self) -> NDArray[np.bool_]:
        return np.array(self._binary, dtype=bool)

    @property
    def senses(self) -> list[str]:
        return list(self._sense)

    @property
    def rhs(self) -> NDArray[np.float64]:
        return np.array(self._rhs)

    def var_name(self, j: int) -> str:
        return self._var_names[j]

    def matrix(self) -> NDArray[np.float64]:
        A = np.zeros((self.n_constraints, self.n_vars))
        np.add.at(A, (np.array(self._row_i, dtype=int), np.array(self._row_j, dtype=int)), self._row_v)
        return A

    def objective_vector(self) -> NDArray[np.float64]:
        c = np.zeros(self.n_vars)
        for j, v in self._obj.items():
            c[j] = v
        return c

    def row_bounds(self) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        rhs = self.rhs
        lo = np.where(np.isin(self._sense, [GE, EQ]), rhs, -np.inf) if rhs.size else rhs
        hi = np.where(np.isin(self._sense, [LE, EQ]), rhs, np.inf) if rhs.size else rhs
        return lo, hi

    def objective(self, x: NDArray[np.float64]) -> float:
        return float(self.objective_vector() @ x + self.obj_constant)

    def residuals(self, x: NDArray[np.float64]) -> NDArray[np.float64]:
        """Per-row constraint violation (zero when satisfied)."""
        act = self.matrix() @ x
        lo, hi = self.row_bounds()
        return np.maximum(0.0, np.maximum(lo - act, act - hi))

    def relaxed(self) -> LinearModel:
        """Copy with every binary marker dropped (bounds stay in [0, 1])."""
        out = self.copy()
        out._binary = [False] * self.n_vars
        return out

    def copy(self) -> LinearModel:
        out = LinearModel.__new__(LinearModel)
        out.__dict__ = {k: (list(v) if isinstance(v, list) else dict(v) if isinstance(v, dict) else v)
                        for k, v in self.__dict__.items()}
        return out

    # -- export ---------------------------------------------------------------
    def to_lp_text(self) -> str:
        """CPLEX-style LP text (objective, rows, bounds, binaries)."""
        buf = io.StringIO()
        names = self._var_names
        buf.write(f"\\ {self.name}\n")
        buf.write("Maximize\n" if self.obj_sense == MAX else "Minimize\n")
        terms = " ".join(_term(v, names[j]) for j, v in sorted(self._obj.items()))
        if self.obj_constant:
            terms += f" {self.obj_constant:+.17g}"
        buf.write(f" obj: {terms.strip() or '0'}\n")
        buf.write("Subject To\n")
        A = self.matrix()
        for r in range(self.n_constraints):
            row = " ".join(_term(A[r, j], names[j]) for j in np.flatnonzero(A[r]))
            op = {LE: "<=", EQ: "=", GE: ">="}[self._sense[r]]
            buf.write(f" {self._row_names[r]}: {row.strip() or '0 ' + names[0]} {op} {self._rhs[r]:.17g}\n")
        buf.write("Bounds\n")
        for j in range(self.n_vars):
            lo, hi = self._lb[j], self._ub[j]
            if self._binary[j]:
                continue
            if lo == -math.inf and hi == math.inf:
                buf.write(f" {names[j]} free\n")
            elif hi == math.inf:
                if lo != 0.0:
                    buf.write(f" {names[j]} >= {lo:.17g}\n")
            else:
                lo_s = "-inf" if lo == -math.inf else f"{lo:.17g}"
                buf.write(f" {lo_s} <= {names[j]} <= {hi:.17g}\n")
        bins = [names[j] for j in range(self.n_vars) if self._binary[j]]
        if bins:
            buf.write("Binaries\n")
            for nm in bins:
                buf.write(f" {nm}\n")
        buf.write("End\n")
        return buf.getvalue()


def _term(v: float, name: str) -> str:
    return f"{'+' if v >= 0 else '-'} {abs(v):.17g} {name}"
