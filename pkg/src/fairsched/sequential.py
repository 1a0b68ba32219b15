"""Alternating solver for the CVaR-approximated fair assignment problem.

Each round solves a mixed-binary assignment model with the scaling held
fixed (a slack ``v`` on the CVaR cap keeps it feasible, priced by ``big_m``),
then an LP that re-optimizes the scaling for the new assignment.  The
assignment objectives ``g_t`` form a nondecreasing sequence.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .lp import EQ, LE, MAX, MIN, LinearModel, SolverError, Status, solve
from .model import Assignment, Instance, ScalingPair
from .reformulation import add_cvar_block, worst_case_cvar

INT_TOL = 1e-6


@dataclass(frozen=True)
class SolverConfig:
    """Knobs of the alternating scheme.

    ``big_m`` and ``scaling_floor`` default (``None``) to values derived from
    the instance; see :meth:`resolve_big_m` and :meth:`resolve_floor`.
    """

    max_iters: int = 40
    tol: float = 1e-4
    big_m: float | None = None
    scaling_floor: float | None = None
    force_generic_path: bool = False
    backend: str = "bundled"
    mip_gap: float = 1e-6
    max_nodes: int = 100_000

    def __post_init__(self) -> None:
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.big_m is not None and not self.big_m > 0:
            raise ValueError("big_m must be positive")
        if self.scaling_floor is not None and not self.scaling_floor > 0:
            raise ValueError("scaling_floor must be positive")

    def resolve_floor(self, n_workers: int) -> float:
        cap = 1.0 / (2 * n_workers**2)
        if self.scaling_floor is None:
            return min(1e-4, cap)
        if self.scaling_floor > cap + 1e-15:
            raise ValueError(f"scaling_floor {self.scaling_floor} exceeds 1/(2 m^2) = {cap}")
        return self.scaling_floor

    def resolve_big_m(self, inst: Instance, cvar_scale: bool = True) -> float:
        """Slack penalty; 100 times the best attainable reward by default.

        For the CVaR cap (``cvar_scale``) the default is further divided by the
        scaling floor: the scaling step parks mass on the vacuous diagonal
        pairs, so the slack it leaves lives on the scale of the floor.
        """
        if self.big_m is not None:
            return self.big_m
        top = 100.0 * max(float(np.abs(inst.rewards).max(axis=1).sum()), 1.0)
        return top / self.resolve_floor(inst.n_workers) if cvar_scale else top

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class IterationRecord:
    t: int
    g: float
    v: float
    cvar_value: float
    wall_time: float
    nodes: int = 0


@dataclass
class RunTrace:
    iterations: list[IterationRecord]
    final_assignment: Assignment
    final_scaling: ScalingPair
    converged: bool
    feasible_for_dro: bool
    big_m: float = math.nan

    @property
    def g(self) -> float:
        return self.iterations[-1].g

    @property
    def v(self) -> float:
        return self.iterations[-1].v


@dataclass(frozen=True)
class SubproblemResult:
    x: Assignment
    v: float
    g: float
    nodes: int = 0
    extra: dict = field(default_factory=dict)


def _assignment_vars(model: LinearModel, inst: Instance) -> np.ndarray:
    n, m = inst.n_tasks, inst.n_workers
    X = model.add_vars(n * m, 0.0, 1.0, binary=True, name="x").reshape(n, m)
    for i, j in inst.fixed:
        model.set_bounds(int(X[i, j]), 1.0, 1.0)
    for i, j in inst.forbidden:
        model.set_bounds(int(X[i, j]), 0.0, 0.0)
    for i in range(n):
        model.add_constraint({int(X[i, j]): 1.0 for j in range(m)}, EQ, 1.0, name=f"assign_{i}")
    return X


def _solve_mip(model: LinearModel, cfg: SolverConfig, what: str):
    kw = {"mip_gap": cfg.mip_gap}
    if cfg.backend == "bundled":
        kw["max_nodes"] = cfg.max_nodes
    res = solve(model, cfg.backend, **kw)
    if res.status is Status.ITERATION_LIMIT:
        raise SolverError(f"{what}: node budget exhausted", res)
    if res.status is not Status.OPTIMAL:
        raise SolverError(f"{what}: solver ended {res.status.value}", res)
    return res


def _extract(res, X: np.ndarray, v_id: int) -> SubproblemResult:
    x = np.round(res.primal[X]).astype(np.int8)
    v = max(0.0, float(res.primal[v_id]))
    return SubproblemResult(Assignment(x), v, float(res.objective_value), int(res.nodes))


def build_assignment_model(s: ScalingPair, inst: Instance, cfg: SolverConfig) -> tuple[LinearModel, np.ndarray, int]:
    """Assignment model for fixed scaling: max reward minus ``big_m * v``."""
    n, m = inst.n_tasks, inst.n_workers
    model = LinearModel("assignment")
    X = _assignment_vars(model, inst)
    v = model.add_var(0.0, math.inf, name="v")
    K = 2 * m * m
    alpha, beta = s.alpha, s.beta

    def a_terms(k: int, i: int):
        p = k % (m * m)
        j, jp = divmod(p, m)
        if j == jp:
            return ()
        w = alpha[j, jp] if k < m * m else -beta[j, jp]
        return ((X[i, j], w), (X[i, jp], -w))

    b = -inst.delta * np.concatenate([alpha.ravel(), beta.ravel()])
    block = add_cvar_block(model, inst, np.zeros((K, n)), b, a_terms=a_terms,
                           generic=cfg.force_generic_path)
    cap = dict(block.value_terms)
    cap[v] = -1.0
    model.add_constraint(cap, LE, 0.0, name="cvar_cap")
    obj = {int(X[i, j]): float(inst.rewards[i, j]) for i in range(n) for j in range(m)}
    obj[v] = -cfg.resolve_big_m(inst)
    model.set_objective(obj, MAX)
    return model, X, v


def solve_assignment_subproblem(s: ScalingPair, inst: Instance, cfg: SolverConfig) -> SubproblemResult:
    model, X, v = build_assignment_model(s, inst, cfg)
    return _extract(_solve_mip(model, cfg, "assignment subproblem"), X, v)


def build_scaling_model(x: Assignment, inst: Instance, cfg: SolverConfig):
    """LP over ``(alpha, beta)`` in the floored simplex and the CVaR block."""
    n, m = inst.n_tasks, inst.n_workers
    floor = cfg.resolve_floor(m)
    model = LinearModel("scaling")
    A = model.add_vars(m * m, floor, math.inf, name="alpha")
    B = model.add_vars(m * m, floor, math.inf, name="beta")
    model.add_constraint({int(k): 1.0 for k in A}, EQ, 1.0, name="alpha_sum")
    model.add_constraint({int(k): 1.0 for k in B}, EQ, 1.0, name="beta_sum")
    xm = x.x.astype(float)
    K = 2 * m * m

    def a_terms(k: int, i: int):
        p = k % (m * m)
        j, jp = divmod(p, m)
        d = xm[i, j] - xm[i, jp]
        if d == 0:
            return ()
        return ((A[p], d),) if k < m * m else ((B[p], -d),)

    def b_terms(k: int):
        p = k % (m * m)
        return ((A[p] if k < m * m else B[p], -inst.delta),)

    block = add_cvar_block(model, inst, np.zeros((K, n)), np.zeros(K), a_terms=a_terms, b_terms=b_terms,
                           generic=cfg.force_generic_path)
    model.set_objective(block.value_terms, MIN)
    return model, A, B, floor


def solve_scaling_subproblem(x: Assignment, inst: Instance, cfg: SolverConfig) -> tuple[ScalingPair, float]:
    model, A, B, floor = build_scaling_model(x, inst, cfg)
    res = solve(model, cfg.backend)
    if res.status is not Status.OPTIMAL:
        raise SolverError(f"scaling subproblem: solver ended {res.status.value}", res)
    m = inst.n_workers
    alpha = np.maximum(res.primal[A], floor).reshape(m, m)
    beta = np.maximum(res.primal[B], floor).reshape(m, m)
    # renormalize away solver round-off so the pair validates exactly
    s = ScalingPair(alpha / alpha.sum(), beta / beta.sum(), floor)
    return s, float(res.objective_value)


def sequential_solve(inst: Instance, cfg: SolverConfig | None = None) -> RunTrace:
    """Alternate assignment and scaling solves from uniform scaling.

    Stops when the relative change in ``g`` drops below ``cfg.tol`` or after
    ``cfg.max_iters`` assignment solves.  The scaling is not updated after
    the last assignment solve, so ``final_scaling`` is the one that produced
    ``final_assignment``.
    """
    cfg = cfg or SolverConfig()
    m = inst.n_workers
    s = ScalingPair.uniform(m, floor=cfg.resolve_floor(m))
    records: list[IterationRecord] = []
    g_prev = math.inf
    converged = False
    sub = None
    for t in range(1, cfg.max_iters + 1):
        start = time.perf_counter()
        try:
            sub = solve_assignment_subproblem(s, inst, cfg)
            cvar, _ = worst_case_cvar(sub.x, s, inst, generic=cfg.force_generic_path, backend=cfg.backend)
        except SolverError as err:
            raise SolverError(f"iteration {t}: {err}", err.result) from err
        records.append(IterationRecord(t, sub.g, sub.v, cvar, time.perf_counter() - start, sub.nodes))
        if math.isfinite(g_prev) and abs(sub.g - g_prev) / max(abs(sub.g), 1.0) < cfg.tol:
            converged = True
            break
        if t == cfg.max_iters:
            break
        try:
            s, _ = solve_scaling_subproblem(sub.x, inst, cfg)
        except SolverError as err:
            raise SolverError(f"iteration {t}: {err}", err.result) from err
        g_prev = sub.g
    return RunTrace(records, sub.x, s, converged, sub.v <= INT_TOL, cfg.resolve_big_m(inst))


def mean_value_solve(inst: Instance, cfg: SolverConfig | None = None) -> SubproblemResult:
    """Assignment balancing expected workloads only, with the same slack penalty."""
    cfg = cfg or SolverConfig()
    n, m = inst.n_tasks, inst.n_workers
    model = LinearModel("mean_value")
    X = _assignment_vars(model, inst)
    v = model.add_var(0.0, math.inf, name="v")
    for j in range(m):
        for jp in range(m):
            if j == jp:
                continue
            row = {int(X[i, j]): float(inst.mu[i]) for i in range(n)}
            for i in range(n):
                row[int(X[i, jp])] = row.get(int(X[i, jp]), 0.0) - float(inst.mu[i])
            row[v] = -1.0
            model.add_constraint(row, LE, inst.delta, name=f"balance_{j}_{jp}")
    obj = {int(X[i, j]): float(inst.rewards[i, j]) for i in range(n) for j in range(m)}
    obj[v] = -cfg.resolve_big_m(inst, cvar_scale=False)
    model.set_objective(obj, MAX)
    return _extract(_solve_mip(model, cfg, "mean-value model"), X, v)
