"""Worst-case expectation and worst-case CVaR over mean-support ambiguity sets.

The ambiguity set holds every distribution with mean ``mu`` supported on
``{xi : G xi <= h}``.  For a convex piecewise-affine loss the worst-case
expectation is an LP (dual of the moment problem); the worst-case CVaR of
``max_k (xi . a_k + b_k)`` is an LP in ``(gamma, tau, lambda, eta_k)``.

:func:`add_cvar_block` writes the CVaR constraint block into a
:class:`~fairsched.lp.LinearModel` so that the same rows serve the plain
evaluation LP, the assignment MILP (``a_k`` affine in ``x``) and the scaling
LP (``a_k, b_k`` affine in ``alpha, beta``).  The ``oracle_*`` functions solve
the primal moment problem over box vertices instead, with HiGHS, and are
used to certify the reformulations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.optimize import linprog

from .lp import EQ, LE, MIN, LinearModel, SolverError, Status, solve
from .model import Assignment, Box, Instance, Polytope, ScalingPair, SupportSet, build_constraint_system

FloatArray = NDArray[np.float64]
Terms = Iterable[tuple[int, float]]

MAX_ORACLE_DIM = 12


@dataclass(frozen=True)
class PiecewiseAffineLoss:
    """``loss(xi) = max_k (c[k] . xi + d[k])``."""

    c: FloatArray
    d: FloatArray

    def __post_init__(self) -> None:
        c = np.atleast_2d(np.asarray(self.c, dtype=float))
        d = np.atleast_1d(np.asarray(self.d, dtype=float))
        if c.shape[0] != d.size or d.size == 0:
            raise ValueError("need one offset per piece and at least one piece")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "d", d)

    def __call__(self, xi: ArrayLike) -> FloatArray | float:
        vals = np.asarray(xi, dtype=float) @ self.c.T + self.d
        return vals.max(axis=-1)


@dataclass(frozen=True)
class ExpectationCertificate:
    gamma: float
    lam: FloatArray
    eta: FloatArray  # (pieces, M)


@dataclass(frozen=True)
class CvarCertificate:
    """Optimal ``(gamma, tau, lambda, eta_0..eta_K)``; ``eta`` is ``(K + 1, M)``.

    For box supports ``M = 2 n`` and ``eta[k] = (eta_1k, eta_2k)``.
    """

    gamma: float
    tau: float
    lam: FloatArray
    eta: FloatArray
    value: float

    def residual(self, a: FloatArray, b: FloatArray, support: SupportSet, epsilon: float) -> float:
        """Largest violation of the CVaR LP constraints at this point."""
        p = support.to_polytope()
        G, h, eps = p.G, p.h, epsilon
        worst = max(0.0, -float(self.eta.min()))
        worst = max(worst, self.tau - self.gamma + float(h @ self.eta[0]))
        worst = max(worst, float(np.abs(G.T @ self.eta[0] + self.lam).max()))
        for k in range(b.size):
            e = self.eta[k + 1]
            worst = max(worst, b[k] - (1 - eps) * self.tau - eps * (self.gamma - h @ e))
            worst = max(worst, float(np.abs(eps * (G.T @ e + self.lam) - a[k]).max()))
        return worst


@dataclass
class CvarBlock:
    """Variable ids of a CVaR block inside a larger model."""

    gamma: int
    tau: int
    lam: NDArray[np.int64]
    eta: list[NDArray[np.int64]]
    value_terms: dict[int, float]

    def certificate(self, x: FloatArray) -> CvarCertificate:
        lam = x[self.lam]
        value = x[self.gamma] + sum(v * x[j] for j, v in self.value_terms.items() if j != self.gamma)
        return CvarCertificate(float(x[self.gamma]), float(x[self.tau]), lam,
                               np.array([x[e] for e in self.eta]), float(value))


def add_cvar_block(
    model: LinearModel,
    inst: Instance,
    a_const: FloatArray,
    b_const: FloatArray,
    a_terms: Callable[[int, int], Terms] | None = None,
    b_terms: Callable[[int], Terms] | None = None,
    generic: bool = False,
) -> CvarBlock:
    """Add the worst-case CVaR rows for ``max_k (xi . a_k + b_k)``.

    ``a_k[i] = a_const[k, i] + sum(coef * var for var, coef in a_terms(k, i))``
    and likewise ``b_k``; ``k`` is 0-based.  The block's optimal
    ``gamma + mu . lambda`` (returned as ``value_terms``) equals the worst-case
    CVaR.  Box supports use the two-sided ``eta_1, eta_2`` layout unless
    ``generic`` is set, which routes through ``G = [I; -I]``.
    """
    n, eps = inst.n_tasks, inst.epsilon
    K = b_const.size
    gamma = model.add_var(-math.inf, math.inf, name="gamma")
    tau = model.add_var(-math.inf, math.inf, name="tau")
    lam = model.add_vars(n, -math.inf, math.inf, name="lambda")
    box = isinstance(inst.support, Box) and not generic
    eta: list[NDArray[np.int64]] = []
    if box:
        lo, up = inst.support.lower, inst.support.upper
        for k in range(K + 1):
            e1 = model.add_vars(n, 0.0, name=f"eta1_{k}")
            e2 = model.add_vars(n, 0.0, name=f"eta2_{k}")
            eta.append(np.concatenate([e1, e2]))
            if k == 0:
                row = {tau: 1.0, gamma: -1.0}
                row.update({int(e1[i]): up[i] for i in range(n)})
                row.update({int(e2[i]): -lo[i] for i in range(n)})
                model.add_constraint(row, LE, 0.0, name="cvar_tau")
                for i in range(n):
                    model.add_constraint({int(e1[i]): 1.0, int(e2[i]): -1.0, int(lam[i]): 1.0}, EQ, 0.0,
                                         name=f"cvar_bal_0_{i}")
                continue
            kk = k - 1
            row: dict[int, float] = {tau: -(1 - eps), gamma: -eps}
            row.update({int(e1[i]): eps * up[i] for i in range(n)})
            row.update({int(e2[i]): -eps * lo[i] for i in range(n)})
            _merge(row, b_terms(kk) if b_terms else ())
            model.add_constraint(row, LE, -b_const[kk], name=f"cvar_cap_{k}")
            for i in range(n):
                row = {int(e1[i]): eps, int(e2[i]): -eps, int(lam[i]): eps}
                _merge(row, ((v, -c) for v, c in (a_terms(kk, i) if a_terms else ())))
                model.add_constraint(row, EQ, a_const[kk, i], name=f"cvar_bal_{k}_{i}")
    else:
        poly = inst.support.to_polytope()
        G, h = poly.G, poly.h
        M = G.shape[0]
        nzG = [np.flatnonzero(G[:, i]) for i in range(n)]
        for k in range(K + 1):
            e = model.add_vars(M, 0.0, name=f"eta_{k}")
            eta.append(e)
            scale = 1.0 if k == 0 else eps
            if k == 0:
                row = {tau: 1.0, gamma: -1.0}
                row.update({int(e[r]): h[r] for r in range(M) if h[r] != 0})
                model.add_constraint(row, LE, 0.0, name="cvar_tau")
            else:
                kk = k - 1
                row = {tau: -(1 - eps), gamma: -eps}
                row.update({int(e[r]): eps * h[r] for r in range(M) if h[r] != 0})
                _merge(row, b_terms(kk) if b_terms else ())
                model.add_constraint(row, LE, -b_const[kk], name=f"cvar_cap_{k}")
            for i in range(n):
                row = {int(e[r]): scale * G[r, i] for r in nzG[i]}
                _merge(row, ((int(lam[i]), scale),))
                if k == 0:
                    model.add_constraint(row, EQ, 0.0, name=f"cvar_bal_0_{i}")
                else:
                    kk = k - 1
                    _merge(row, ((v, -c) for v, c in (a_terms(kk, i) if a_terms else ())))
                    model.add_constraint(row, EQ, a_const[kk, i], name=f"cvar_bal_{k}_{i}")
    value_terms = {gamma: 1.0}
    value_terms.update({int(lam[i]): float(inst.mu[i]) for i in range(n)})
    return CvarBlock(gamma, tau, lam, eta, value_terms)


def _merge(row: dict[int, float], terms: Terms) -> None:
    for v, c in terms:
        row[int(v)] = row.get(int(v), 0.0) + float(c)


def worst_case_cvar(
    x: Assignment | ArrayLike,
    s: ScalingPair,
    inst: Instance,
    generic: bool = False,
    backend: str = "bundled",
) -> tuple[float, CvarCertificate]:
    """Worst-case CVaR of ``max_k (xi . a_k(x) + b_k)`` over the ambiguity set."""
    cs = build_constraint_system(x, s, inst.delta)
    model = LinearModel("worst_case_cvar")
    block = add_cvar_block(model, inst, cs.a, cs.b, generic=generic)
    model.set_objective(block.value_terms, MIN)
    res = solve(model, backend)
    if res.status is not Status.OPTIMAL:
        raise SolverError(f"worst-case CVaR LP ended {res.status.value}; check that mu is interior", res)
    cert = block.certificate(res.primal)
    return res.objective_value, cert


def worst_case_expectation(
    loss: PiecewiseAffineLoss,
    mu: ArrayLike,
    support: SupportSet,
    backend: str = "bundled",
) -> tuple[float, ExpectationCertificate]:
    """``sup E[loss(xi)]`` over distributions with mean ``mu`` on ``support``."""
    mu = np.asarray(mu, dtype=float)
    poly = support.to_polytope()
    G, h = poly.G, poly.h
    M, n = G.shape
    model = LinearModel("worst_case_expectation")
    gamma = model.add_var(-math.inf, math.inf, name="gamma")
    lam = model.add_vars(n, -math.inf, math.inf, name="lambda")
    etas = []
    for k in range(loss.d.size):
        e = model.add_vars(M, 0.0, name=f"eta_{k}")
        etas.append(e)
        row = {int(e[r]): h[r] for r in range(M) if h[r] != 0}
        row[gamma] = -1.0
        model.add_constraint(row, LE, -loss.d[k], name=f"cap_{k}")
        for i in range(n):
            row = {int(e[r]): G[r, i] for r in np.flatnonzero(G[:, i])}
            row[int(lam[i])] = 1.0
            model.add_constraint(row, EQ, loss.c[k, i], name=f"bal_{k}_{i}")
    obj = {gamma: 1.0}
    obj.update({int(lam[i]): mu[i] for i in range(n)})
    model.set_objective(obj, MIN)
    res = solve(model, backend)
    if res.status is not Status.OPTIMAL:
        raise SolverError(f"worst-case expectation LP ended {res.status.value}; check that mu is interior", res)
    xs = res.primal
    cert = ExpectationCertificate(float(xs[gamma]), xs[lam], np.array([xs[e] for e in etas]))
    return res.objective_value, cert


# -- brute-force oracles -------------------------------------------------------

def _vertex_moment_lp(values: FloatArray, V: FloatArray, mu: FloatArray) -> float:
    """``max sum_s p_s values_s`` over probability vectors with ``sum_s p_s V_s = mu``."""
    S, n = V.shape
    A_eq = np.vstack([np.ones((1, S)), V.T])
    b_eq = np.concatenate([[1.0], mu])
    res = linprog(-values, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status != 0:
        raise SolverError(f"vertex moment LP failed: {res.message}")
    return float(-res.fun)


def _check_oracle_support(support: SupportSet) -> Box:
    if not isinstance(support, Box):
        raise TypeError("the vertex oracle needs a box support")
    if support.dim > MAX_ORACLE_DIM:
        raise ValueError(f"vertex oracle refuses n_tasks={support.dim} > {MAX_ORACLE_DIM}")
    return support


def oracle_worst_case_expectation(loss: PiecewiseAffineLoss, mu: ArrayLike, support: Box) -> float:
    """Primal moment problem restricted to the ``2^n`` box vertices.

    Exact for convex losses: every point of the box splits into vertices
    without changing the mean, and splitting can only raise the expectation.
    """
    box = _check_oracle_support(support)
    V = box.vertices()
    return _vertex_moment_lp(np.asarray(loss(V)), V, np.asarray(mu, dtype=float))


def cvar_loss(a: FloatArray, b: FloatArray, epsilon: float, tau: float) -> PiecewiseAffineLoss:
    """Pieces ``(0, tau)`` and ``(a_k / eps, b_k / eps + (1 - 1/eps) tau)``."""
    n = a.shape[1]
    c = np.vstack([np.zeros((1, n)), a / epsilon])
    d = np.concatenate([[tau], b / epsilon + (1 - 1 / epsilon) * tau])
    return PiecewiseAffineLoss(c, d)


def tau_bound(a: FloatArray, b: FloatArray, support: Box) -> float:
    """``B`` with ``|xi . a_k + b_k| <= B`` on the box, so the CVaR minimizer lies in ``[-B, B]``."""
    V = support.vertices()
    return float(np.abs(V @ a.T + b).max())


def oracle_worst_case_cvar(
    x: Assignment | ArrayLike,
    s: ScalingPair,
    inst: Instance,
    tau_step: float = 1e-4,
    tau_grid: ArrayLike | None = None,
) -> float:
    """Minimum over a ``tau`` grid of the vertex-oracle worst-case expectation.

    The inner value is convex in ``tau``, so the grid minimum is located by
    ternary search over grid indices rather than a full scan.  An explicit
    ``tau_grid`` is scanned exhaustively.
    """
    box = _check_oracle_support(inst.support)
    cs = build_constraint_system(x, s, inst.delta)
    eps = inst.epsilon
    V = box.vertices()
    mu = inst.mu
    L = (V @ cs.a.T + cs.b).max(axis=1)  # loss at each vertex

    def phi(tau: float) -> float:
        vals = tau + np.maximum(0.0, L - tau) / eps
        return _vertex_moment_lp(vals, V, mu)

    if tau_grid is not None:
        return min(phi(t) for t in np.asarray(tau_grid, dtype=float))
    B = tau_bound(cs.a, cs.b, box)
    lo, hi = 0, int(math.ceil(2 * B / tau_step))
    grid = lambda g: -B + g * tau_step  # noqa: E731
    cache: dict[int, float] = {}

    def f(g: int) -> float:
        if g not in cache:
            cache[g] = phi(grid(g))
        return cache[g]

    while hi - lo > 2:
        m1 = lo + (hi - lo) // 3
        m2 = hi - (hi - lo) // 3
        if f(m1) < f(m2):
            hi = m2
        elif f(m1) > f(m2):
            lo = m1
        else:
            lo, hi = m1, m2
    return min(f(g) for g in range(lo, hi + 1))


def worst_case_violation_grid(
    x: Assignment | ArrayLike,
    inst: Instance,
    points_per_axis: int = 5,
) -> float:
    """Largest joint violation probability over mean-``mu`` distributions on a box grid.

    Atoms sit on a ``points_per_axis``-per-axis lattice of the box; an atom
    violates when its spread of worker totals exceeds ``delta``.  Returns
    ``max sum_s p_s [violation at atom s]``.
    """
    box = inst.support
    if not isinstance(box, Box):
        raise TypeError("grid violation check needs a box support")
    xm = np.asarray(x.x if isinstance(x, Assignment) else x, dtype=float)
    axes = [np.linspace(box.lower[i], box.upper[i], points_per_axis) for i in range(box.dim)]
    atoms = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, box.dim)
    totals = atoms @ xm
    viol = (totals.max(axis=1) - totals.min(axis=1) > inst.delta).astype(float)
    if not viol.any():
        return 0.0
    return _vertex_moment_lp(viol, atoms, inst.mu)
