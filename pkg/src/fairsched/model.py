"""Domain types for fair task assignment under uncertain service times.

An :class:`Instance` bundles the rewards, the mean service times and the
support set of the service-time vector.  The pairwise balance constraints
``|sum_i xi_i (x_ij - x_ij')| <= delta`` are rewritten as ``K = 2 m^2`` scaled
affine rows ``xi . a_k + b_k <= 0`` by :func:`build_constraint_system`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

FloatArray = NDArray[np.float64]


@dataclass(frozen=True)
class Box:
    """Hyperrectangle ``l <= xi <= u``."""

    lower: FloatArray
    upper: FloatArray

    def __post_init__(self) -> None:
        object.__setattr__(self, "lower", _frozen(self.lower))
        object.__setattr__(self, "upper", _frozen(self.upper))

    @property
    def dim(self) -> int:
        return self.lower.size

    def to_polytope(self) -> Polytope:
        n = self.dim
        G = np.vstack([np.eye(n), -np.eye(n)])
        h = np.concatenate([self.upper, -self.lower])
        return Polytope(G, h)

    def contains(self, xi: ArrayLike, tol: float = 0.0) -> bool:
        xi = np.asarray(xi, dtype=float)
        return bool(np.all(xi >= self.lower - tol) and np.all(xi <= self.upper + tol))

    def vertices(self) -> FloatArray:
        """All ``2**n`` corners, row ``s`` picks ``upper`` where bit ``i`` of ``s`` is set."""
        n = self.dim
        bits = (np.arange(2**n)[:, None] >> np.arange(n)[None, :]) & 1
        return np.where(bits == 1, self.upper, self.lower)


@dataclass(frozen=True)
class Polytope:
    """Polytope ``G xi <= h`` with ``M`` rows."""

    G: FloatArray
    h: FloatArray

    def __post_init__(self) -> None:
        G = _frozen(np.atleast_2d(np.asarray(self.G, dtype=float)))
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "h", _frozen(self.h))

    @property
    def dim(self) -> int:
        return self.G.shape[1]

    @property
    def n_rows(self) -> int:
        return self.G.shape[0]

    def to_polytope(self) -> Polytope:
        return self

    def contains(self, xi: ArrayLike, tol: float = 0.0) -> bool:
        return bool(np.all(self.G @ np.asarray(xi, dtype=float) <= self.h + tol))


SupportSet = Union[Box, Polytope]


@dataclass(frozen=True)
class Instance:
    """A fair assignment problem.

    Attributes:
        rewards: ``(n_tasks, n_workers)`` reward matrix.
        mu: mean service time per task.
        support: support set of the service-time vector.
        delta: balance threshold on pairwise total-time differences.
        epsilon: tolerated joint violation probability.
        fixed: ``(task, worker)`` pairs forced to 1.
        forbidden: ``(task, worker)`` pairs forced to 0.
    """

    rewards: FloatArray
    mu: FloatArray
    support: SupportSet
    delta: float
    epsilon: float
    fixed: tuple[tuple[int, int], ...] = ()
    forbidden: tuple[tuple[int, int], ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "rewards", _frozen(np.atleast_2d(np.asarray(self.rewards, dtype=float))))
        object.__setattr__(self, "mu", _frozen(self.mu))
        object.__setattr__(self, "delta", float(self.delta))
        object.__setattr__(self, "epsilon", float(self.epsilon))
        object.__setattr__(self, "fixed", tuple((int(i), int(j)) for i, j in self.fixed))
        object.__setattr__(self, "forbidden", tuple((int(i), int(j)) for i, j in self.forbidden))

    @property
    def n_tasks(self) -> int:
        return self.rewards.shape[0]

    @property
    def n_workers(self) -> int:
        return self.rewards.shape[1]

    @property
    def is_box(self) -> bool:
        return isinstance(self.support, Box)

    def replace(self, **changes) -> Instance:
        from dataclasses import replace

        return replace(self, **changes)


@dataclass(frozen=True)
class Assignment:
    """Binary task-to-worker matrix with exactly one worker per task."""

    x: NDArray[np.int64]

    def __post_init__(self) -> None:
        x = np.atleast_2d(np.asarray(self.x))
        if not np.all((x == 0) | (x == 1)):
            raise ValueError("assignment entries must be 0 or 1")
        if not np.all(x.sum(axis=1) == 1):
            raise ValueError("every task must be assigned to exactly one worker")
        object.__setattr__(self, "x", _frozen(x, np.int64))

    @classmethod
    def from_workers(cls, workers: ArrayLike, n_workers: int) -> Assignment:
        workers = np.asarray(workers, dtype=int)
        x = np.zeros((workers.size, n_workers), dtype=np.int64)
        x[np.arange(workers.size), workers] = 1
        return cls(x)

    @property
    def workers(self) -> NDArray[np.int64]:
        return self.x.argmax(axis=1)

    @property
    def n_tasks(self) -> int:
        return self.x.shape[0]

    @property
    def n_workers(self) -> int:
        return self.x.shape[1]

    def reward(self, rewards: ArrayLike) -> float:
        return float(np.sum(np.asarray(rewards) * self.x))


@dataclass(frozen=True)
class ScalingPair:
    """Positive scaling matrices on the floored simplex.

    ``alpha`` scales the rows ``T_j - T_j' <= delta`` and ``beta`` the rows
    ``T_j' - T_j <= delta``.  Both sum to one and every entry is at least
    ``floor``.
    """

    alpha: FloatArray
    beta: FloatArray
    floor: float = 1e-4

    def __post_init__(self) -> None:
        alpha = _frozen(np.atleast_2d(np.asarray(self.alpha, dtype=float)))
        beta = _frozen(np.atleast_2d(np.asarray(self.beta, dtype=float)))
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)
        m = alpha.shape[0]
        if alpha.shape != (m, m) or beta.shape != (m, m):
            raise ValueError("alpha and beta must be square and of equal size")
        if not 0 < self.floor <= 1.0 / m**2:
            raise ValueError(f"floor must lie in (0, 1/m^2], got {self.floor}")

    @classmethod
    def uniform(cls, n_workers: int, floor: float | None = None) -> ScalingPair:
        m = n_workers
        a = np.full((m, m), 1.0 / m**2)
        return cls(a, a.copy(), min(1e-4, 1.0 / m**2) if floor is None else floor)

    @property
    def n_workers(self) -> int:
        return self.alpha.shape[0]

    def violations(self, tol: float = 1e-9) -> list[str]:
        out = []
        if self.alpha.min() < self.floor - tol or self.beta.min() < self.floor - tol:
            out.append("scaling entries below floor")
        if abs(self.alpha.sum() - 1) > tol or abs(self.beta.sum() - 1) > tol:
            out.append("scaling matrices must each sum to 1")
        return out

    def scaled(self, c: float) -> ScalingPair:
        """Common rescaling; the result generally leaves the normalized set."""
        return _UncheckedScaling(self.alpha * c, self.beta * c, self.floor)


class _UncheckedScaling(ScalingPair):
    # used for homogeneity checks, where sums differ from one
    def __post_init__(self) -> None:
        object.__setattr__(self, "alpha", _frozen(self.alpha))
        object.__setattr__(self, "beta", _frozen(self.beta))


@dataclass(frozen=True)
class ConstraintSystem:
    """Rows ``xi . a[k] + b[k] <= 0`` for ``k = 0..K-1`` (0-based storage).

    Row ``k`` (0-based) with ``k < m^2`` is the ``alpha`` row of the pair
    ``(k // m, k % m)``; row ``m^2 + p`` is the ``beta`` row of pair ``p``.
    """

    a: FloatArray
    b: FloatArray
    n_workers: int = field(default=0)

    @property
    def K(self) -> int:
        return self.b.size

    def pair(self, k: int) -> tuple[int, int, str]:
        """Map a 1-based row index to ``(j, j', block)`` with 1-based workers."""
        m = self.n_workers
        if not 1 <= k <= 2 * m * m:
            raise IndexError(k)
        block = "alpha" if k <= m * m else "beta"
        p = (k - 1) % (m * m)
        return p // m + 1, p % m + 1, block

    def evaluate(self, xi: ArrayLike) -> FloatArray:
        """Row values ``xi . a_k + b_k``; ``xi`` may be a batch of rows."""
        return np.asarray(xi, dtype=float) @ self.a.T + self.b


def build_constraint_system(x: Assignment | ArrayLike, s: ScalingPair, delta: float) -> ConstraintSystem:
    xm = np.asarray(x.x if isinstance(x, Assignment) else x, dtype=float)
    n, m = xm.shape
    if s.alpha.shape != (m, m):
        raise ValueError(f"scaling is {s.alpha.shape[0]} workers, assignment has {m}")
    # diff[i, j, j'] = x_ij - x_ij'
    diff = xm[:, :, None] - xm[:, None, :]
    a_alpha = (s.alpha[None, :, :] * diff).reshape(n, m * m).T
    a_beta = (-s.beta[None, :, :] * diff).reshape(n, m * m).T
    a = np.vstack([a_alpha, a_beta])
    b = -delta * np.concatenate([s.alpha.ravel(), s.beta.ravel()])
    return ConstraintSystem(_frozen(a), _frozen(b), m)


def validate_instance(inst: Instance) -> list[str]:
    """Return every violated instance invariant; an empty list means valid."""
    problems: list[str] = []
    n = inst.rewards.shape[0]
    m = inst.rewards.shape[1] if inst.rewards.ndim == 2 else 0
    if n < 1 or m < 1:
        problems.append("n_tasks and n_workers must be positive")
    if inst.mu.shape != (n,):
        problems.append(f"mu has shape {inst.mu.shape}, expected ({n},)")
    if not np.all(np.isfinite(inst.rewards)):
        problems.append("rewards must be finite")
    if not inst.delta >= 0:
        problems.append("delta must be nonnegative")
    if not 0 < inst.epsilon < 1:
        problems.append("epsilon out of (0,1)")
    sup = inst.support
    if isinstance(sup, Box):
        if sup.lower.shape != (n,) or sup.upper.shape != (n,):
            problems.append("support bounds do not match n_tasks")
        else:
            if not np.all(sup.lower < sup.upper):
                problems.append("support requires l < u componentwise")
            if inst.mu.shape == (n,) and not np.all((sup.lower < inst.mu) & (inst.mu < sup.upper)):
                problems.append("mu not interior")
    else:
        if sup.G.shape[1] != n or sup.h.shape != (sup.G.shape[0],):
            problems.append("support G/h do not match n_tasks")
        else:
            problems.extend(_polytope_problems(sup))
            if inst.mu.shape == (n,) and not np.all(sup.G @ inst.mu < sup.h):
                problems.append("mu not interior")
    for name, pairs in (("fixed", inst.fixed), ("forbidden", inst.forbidden)):
        for i, j in pairs:
            if not (0 <= i < n and 0 <= j < m):
                problems.append(f"{name} pair ({i}, {j}) out of range")
    fixed_tasks = [i for i, _ in inst.fixed]
    if len(set(fixed_tasks)) != len(fixed_tasks):
        problems.append("a task is fixed to more than one worker")
    if set(inst.fixed) & set(inst.forbidden):
        problems.append("a pair is both fixed and forbidden")
    for i in range(n):
        banned = {j for t, j in inst.forbidden if t == i}
        if m and len(banned) >= m:
            problems.append(f"task {i} has every worker forbidden")
    return problems


def _polytope_problems(p: Polytope) -> list[str]:
    from scipy.optimize import linprog

    n = p.dim
    for i in range(n):
        for sign in (1.0, -1.0):
            c = np.zeros(n)
            c[i] = -sign
            res = linprog(c, A_ub=p.G, b_ub=p.h, bounds=[(None, None)] * n, method="highs")
            if res.status == 2:
                return ["support polytope is empty"]
            if res.status == 3:
                return ["support polytope is unbounded"]
    # Chebyshev ball radius > 0 iff the interior is nonempty
    norms = np.linalg.norm(p.G, axis=1)
    c = np.zeros(n + 1)
    c[-1] = -1.0
    res = linprog(c, A_ub=np.hstack([p.G, norms[:, None]]), b_ub=p.h,
                  bounds=[(None, None)] * n + [(0, None)], method="highs")
    if res.status != 0 or -res.fun <= 1e-12:
        return ["support polytope has empty interior"]
    return []


def generate_instance(
    seed: int,
    n_tasks: int = 20,
    n_workers: int = 5,
    delta: float = 5.0,
    epsilon: float = 0.05,
    mu_range: tuple[float, float] = (0.0, 100.0),
    halfwidth_range: tuple[float, float] = (0.0, 3.0),
    reward_range: tuple[float, float] = (0.0, 100.0),
) -> Instance:
    """Synthetic instance: uniform means, symmetric boxes, uniform rewards.

    Half-widths are ``min(mu, r')`` with ``r' ~ U(halfwidth_range)`` so the
    lower bound stays nonnegative.  Zero-width draws are redrawn.
    """
    rng = make_rng(seed)
    mu = rng.uniform(*mu_range, size=n_tasks)
    while np.any(mu <= 0):
        bad = mu <= 0
        mu[bad] = rng.uniform(*mu_range, size=int(bad.sum()))
    r_prime = rng.uniform(*halfwidth_range, size=n_tasks)
    while np.any(r_prime <= 0):
        bad = r_prime <= 0
        r_prime[bad] = rng.uniform(*halfwidth_range, size=int(bad.sum()))
    r = np.minimum(mu, r_prime)
    rewards = rng.uniform(*reward_range, size=(n_tasks, n_workers))
    return Instance(rewards, mu, Box(mu - r, mu + r), delta, epsilon)


# Named sub-streams of one seed; disjoint by construction.
STREAM_INSTANCE = 0
STREAM_EVAL_DRO = 1
STREAM_EVAL_MEAN = 2


def make_rng(seed: int, stream: int = STREAM_INSTANCE) -> np.random.Generator:
    """Deterministic PCG64 generator for sub-stream ``stream`` of ``seed``."""
    ss = np.random.SeedSequence(_u64(seed), spawn_key=(int(stream),))
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(seed: int, index: int) -> int:
    """Replication seed ``seed XOR index`` in 64-bit arithmetic."""
    return _u64(seed) ^ _u64(index)


def _u64(v: int) -> int:
    return int(v) & 0xFFFFFFFFFFFFFFFF


def _frozen(a: ArrayLike, dtype=float) -> NDArray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr
