"""Monte Carlo assessment of assignments and the replicated experiment driver."""

from __future__ import annotations

import logging
import multiprocessing
import os
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from numpy.typing import NDArray

from .lp import SolverError
from .model import (
    STREAM_EVAL_DRO,
    STREAM_EVAL_MEAN,
    Assignment,
    Box,
    Instance,
    derive_seed,
    generate_instance,
    make_rng,
)
from .sequential import SolverConfig, mean_value_solve, sequential_solve

log = logging.getLogger(__name__)

QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)
HIST_BINS = 50
_CHUNK = 100_000

CSV_FIELDS = ("replication", "method", "reward", "violation_probability", "g_terminal", "v_terminal",
              "iterations", "wall_time_ms", "status")


class UnsupportedSupportError(ValueError):
    """Sampling is only defined for box supports."""


@dataclass(frozen=True)
class EvaluationReport:
    n_samples: int
    violation_probability: float
    n_violations: int
    spread_mean: float
    spread_max: float
    spread_quantiles: dict[str, float]
    reward: float
    worker_time_means: list[float]
    sampler_mean_matches_mu: bool
    spreads: NDArray[np.float64] | None = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("spreads")
        return d


def spreads_of(xi: NDArray[np.float64], x: NDArray) -> NDArray[np.float64]:
    """Max minus min worker total for each sampled row of ``xi``."""
    totals = xi @ x
    return totals.max(axis=1) - totals.min(axis=1)


def evaluate(
    x: Assignment,
    inst: Instance,
    n_samples: int = 10_000,
    seed: int = 0,
    stream: int = STREAM_EVAL_DRO,
    keep_spreads: bool = False,
) -> EvaluationReport:
    """Sample service times uniformly on the box and score ``x``.

    A sample violates when its spread strictly exceeds ``delta``.  When the
    box is not centred on ``mu`` the sampler's mean differs from ``mu``; the
    report flags this through ``sampler_mean_matches_mu`` and does not adjust.
    """
    box = inst.support
    if not isinstance(box, Box):
        raise UnsupportedSupportError("evaluation samples uniformly on a box; polytope supports are not supported")
    if x.x.shape != inst.rewards.shape:
        raise ValueError(f"assignment shape {x.x.shape} does not match instance {inst.rewards.shape}")
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    rng = make_rng(seed, stream)
    xm = x.x.astype(float)
    spreads = np.empty(n_samples)
    time_sum = np.zeros(inst.n_workers)
    for start in range(0, n_samples, _CHUNK):
        size = min(_CHUNK, n_samples - start)
        xi = rng.uniform(box.lower, box.upper, size=(size, inst.n_tasks))
        totals = xi @ xm
        spreads[start:start + size] = totals.max(axis=1) - totals.min(axis=1)
        time_sum += totals.sum(axis=0)
    n_viol = int(np.count_nonzero(spreads > inst.delta))
    qs = np.quantile(spreads, QUANTILES)
    centred = bool(np.allclose(0.5 * (box.lower + box.upper), inst.mu, rtol=0.0, atol=1e-9))
    return EvaluationReport(
        n_samples=n_samples,
        violation_probability=n_viol / n_samples,
        n_violations=n_viol,
        spread_mean=float(spreads.mean()),
        spread_max=float(spreads.max()),
        spread_quantiles={f"q{int(round(q * 100)):02d}": float(v) for q, v in zip(QUANTILES, qs)},
        reward=x.reward(inst.rewards),
        worker_time_means=(time_sum / n_samples).tolist(),
        sampler_mean_matches_mu=centred,
        spreads=spreads if keep_spreads else None,
    )


# -- experiment ---------------------------------------------------------------

@dataclass(frozen=True)
class GeneratorParams:
    n_tasks: int = 20
    n_workers: int = 5
    delta: float = 5.0
    epsilon: float = 0.05
    mu_range: tuple[float, float] = (0.0, 100.0)
    halfwidth_range: tuple[float, float] = (0.0, 3.0)
    reward_range: tuple[float, float] = (0.0, 100.0)

    def instance(self, seed: int) -> Instance:
        return generate_instance(seed, **asdict(self))


@dataclass(frozen=True)
class Histogram:
    edges: list[float]
    counts: list[int]

    @classmethod
    def of(cls, values, lo: float, hi: float, bins: int = HIST_BINS) -> Histogram:
        hi = hi if hi > lo else lo + 1.0
        counts, edges = np.histogram(np.asarray(values, dtype=float), bins=bins, range=(lo, hi))
        return cls(edges.tolist(), counts.tolist())


@dataclass(frozen=True)
class MethodSummary:
    mean_violation: float
    mean_reward: float
    violation_histogram: Histogram
    reward_histogram: Histogram


@dataclass
class ReplicationOutcome:
    replication: int
    seed: int
    rows: list[dict]
    failed: bool
    error: str = ""
    dro_feasible: bool = False
    spreads: dict[str, list[float]] | None = None


@dataclass
class ExperimentSummary:
    n_replications: int
    n_succeeded: int
    n_failed: int
    n_dro_infeasible: int
    methods: dict[str, MethodSummary]
    rows: list[dict]
    failures: list[dict]
    wall_time_s: float
    spread_samples: dict[str, list[float]] = field(default_factory=dict)

    @property
    def success_rate(self) -> float:
        return self.n_succeeded / self.n_replications if self.n_replications else 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("rows")
        d.pop("spread_samples")
        d["success_rate"] = self.success_rate
        return d


def _run_replication(args) -> ReplicationOutcome:
    r, base_seed, params, cfg, n_samples, keep_spreads = args
    seed = derive_seed(base_seed, r)
    inst = params.instance(seed)
    rows: list[dict] = []
    try:
        t0 = time.perf_counter()
        trace = sequential_solve(inst, cfg)
        t_dro = time.perf_counter() - t0
        t0 = time.perf_counter()
        mv = mean_value_solve(inst, cfg)
        t_mean = time.perf_counter() - t0
    except SolverError as err:
        log.warning("replication %d failed: %s", r, err)
        return ReplicationOutcome(r, seed, [], True, str(err))
    spreads = {}
    for method, x, g, v, iters, wall, stream in (
        ("dro", trace.final_assignment, trace.g, trace.v, len(trace.iterations), t_dro, STREAM_EVAL_DRO),
        ("mean", mv.x, mv.g, mv.v, 1, t_mean, STREAM_EVAL_MEAN),
    ):
        rep = evaluate(x, inst, n_samples, seed, stream, keep_spreads=keep_spreads)
        if keep_spreads:
            spreads[method] = rep.spreads.tolist()
        rows.append({
            "replication": r, "method": method, "reward": rep.reward,
            "violation_probability": rep.violation_probability, "g_terminal": g, "v_terminal": v,
            "iterations": iters, "wall_time_ms": round(wall * 1000.0, 3), "status": "ok",
        })
    return ReplicationOutcome(r, seed, rows, False, dro_feasible=trace.feasible_for_dro,
                              spreads=spreads or None)


def resolve_jobs(jobs: int | None = None) -> int:
    """Worker count: ``FAIRSCHED_JOBS`` overrides the argument; default 1."""
    env = os.environ.get("FAIRSCHED_JOBS")
    if env:
        jobs = int(env)
    return max(1, int(jobs or 1))


def run_experiment(
    params: GeneratorParams,
    cfg: SolverConfig,
    n_replications: int,
    n_samples: int,
    base_seed: int = 0,
    jobs: int | None = None,
    time_budget: float | None = None,
    keep_spreads_of: int | None = 0,
) -> ExperimentSummary:
    """Run ``n_replications`` generate/solve/evaluate rounds and aggregate.

    ``time_budget`` is a hard wall-clock limit: replications unfinished when
    it expires are recorded as failures and their workers are terminated.
    Results are folded in replication order, so the summary does not depend
    on ``jobs``.
    """
    start = time.perf_counter()
    jobs = resolve_jobs(jobs)
    tasks = [(r, base_seed, params, cfg, n_samples, r == keep_spreads_of) for r in range(n_replications)]
    if jobs == 1 and time_budget is None:
        outcomes = [_run_replication(t) for t in tasks]
    else:
        outcomes = _run_pooled(tasks, jobs, start, time_budget)
    return _summarize(outcomes, n_replications, time.perf_counter() - start)


def _budget_failure(task) -> ReplicationOutcome:
    r, base_seed = task[0], task[1]
    return ReplicationOutcome(r, derive_seed(base_seed, r), [], True, "time budget exhausted")


def _run_pooled(tasks, jobs: int, start: float, time_budget: float | None) -> list[ReplicationOutcome]:
    outcomes = []
    pool = multiprocessing.get_context("spawn").Pool(jobs)
    try:
        pending = [pool.apply_async(_run_replication, (t,)) for t in tasks]
        for task, res in zip(tasks, pending):
            remaining = None if time_budget is None else time_budget - (time.perf_counter() - start)
            if remaining is not None and remaining <= 0 and not res.ready():
                outcomes.append(_budget_failure(task))
                continue
            try:
                outcomes.append(res.get(timeout=remaining))
            except multiprocessing.TimeoutError:
                outcomes.append(_budget_failure(task))
    finally:
        pool.terminate()
        pool.join()
    return outcomes


def _summarize(outcomes: list[ReplicationOutcome], n_replications: int, wall: float) -> ExperimentSummary:
    ok = [o for o in outcomes if not o.failed]
    rows = [row for o in ok for row in o.rows]
    rewards = [row["reward"] for row in rows]
    top = max(rewards, default=1.0)
    methods = {}
    for method in ("dro", "mean"):
        mine = [row for row in rows if row["method"] == method]
        viol = [row["violation_probability"] for row in mine]
        rew = [row["reward"] for row in mine]
        methods[method] = MethodSummary(
            mean_violation=float(np.mean(viol)) if viol else float("nan"),
            mean_reward=float(np.mean(rew)) if rew else float("nan"),
            violation_histogram=Histogram.of(viol, 0.0, 1.0),
            reward_histogram=Histogram.of(rew, 0.0, top),
        )
    spreads = next((o.spreads for o in ok if o.spreads), {}) or {}
    return ExperimentSummary(
        n_replications=n_replications,
        n_succeeded=len(ok),
        n_failed=n_replications - len(ok),
        n_dro_infeasible=sum(not o.dro_feasible for o in ok),
        methods=methods,
        rows=rows,
        failures=[{"replication": o.replication, "seed": o.seed, "error": o.error} for o in outcomes if o.failed],
        wall_time_s=wall,
        spread_samples=spreads,
    )
