"""Acceptance criteria for the package, one verdict line per criterion.

Each test records its verdict through :func:`acceptance_log.record` (printed
immediately and repeated in the terminal summary) and then asserts it.
"""

import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from acceptance_log import record
from fairsched.evaluation import GeneratorParams, evaluate, run_experiment
from fairsched.model import Assignment, ScalingPair, build_constraint_system, generate_instance
from fairsched.reformulation import (
    PiecewiseAffineLoss,
    oracle_worst_case_cvar,
    oracle_worst_case_expectation,
    worst_case_cvar,
    worst_case_expectation,
    worst_case_violation_grid,
)
from fairsched.sequential import SolverConfig, sequential_solve

ROOT = Path(__file__).resolve().parents[1]


def _random_scaling(rng, m):
    a, b = rng.uniform(0.05, 1, (m, m)), rng.uniform(0.05, 1, (m, m))
    return ScalingPair(a / a.sum(), b / b.sum(), floor=min(1e-4, 1 / (2 * m * m)))


def _random_case(rng, n_max=4, m_max=3):
    n, m = int(rng.integers(1, n_max + 1)), int(rng.integers(1, m_max + 1))
    inst = generate_instance(int(rng.integers(2**63)), n_tasks=n, n_workers=m,
                             delta=float(rng.uniform(0, 8)), epsilon=float(rng.uniform(0.02, 0.5)))
    return inst, Assignment.from_workers(rng.integers(0, m, n), m), _random_scaling(rng, m)


def test_duality_certification():
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    worst = 0.0
    for case in range(200):
        inst, x, s = _random_case(rng)
        cs = build_constraint_system(x, s, inst.delta)
        # alternate the balance-constraint hull with unstructured piecewise-affine losses
        if case % 2:
            k = int(rng.integers(1, 6))
            loss = PiecewiseAffineLoss(rng.normal(size=(k, inst.n_tasks)), rng.normal(size=k))
        else:
            loss = PiecewiseAffineLoss(cs.a, cs.b)
        value, _ = worst_case_expectation(loss, inst.mu, inst.support)
        worst = max(worst, abs(value - oracle_worst_case_expectation(loss, inst.mu, inst.support)))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-6 and elapsed <= 60
    record("duality certification", ok, f"200 cases, max |dual - primal| = {worst:.2e} (tol 1e-6), {elapsed:.1f}s (<= 60s)")
    assert ok


def test_cvar_reformulation_certification():
    rng = np.random.default_rng(202)
    start = time.perf_counter()
    worst_oracle = worst_paths = 0.0
    for _ in range(100):
        inst, x, s = _random_case(rng)
        v_box, _ = worst_case_cvar(x, s, inst)
        v_gen, _ = worst_case_cvar(x, s, inst, generic=True)
        worst_paths = max(worst_paths, abs(v_box - v_gen))
        worst_oracle = max(worst_oracle, abs(v_box - oracle_worst_case_cvar(x, s, inst)))
    elapsed = time.perf_counter() - start
    ok = worst_oracle <= 1e-3 and worst_paths <= 1e-7 and elapsed <= 300
    record("CVaR reformulation certification", ok,
           f"100 cases, max |LP - oracle| = {worst_oracle:.2e} (tol 1e-3), max |box - generic| = {worst_paths:.2e} "
           f"(tol 1e-7), {elapsed:.1f}s (<= 300s)")
    assert ok


def test_constraint_map_equivalence():
    rng = np.random.default_rng(303)
    mismatches = 0
    for _ in range(1000):
        n, m = int(rng.integers(1, 8)), int(rng.integers(1, 5))
        x = Assignment.from_workers(rng.integers(0, m, n), m)
        s = _random_scaling(rng, m)
        delta = float(rng.uniform(0, 10))
        xi = rng.uniform(0, 10, n)
        lhs = build_constraint_system(x, s, delta).evaluate(xi[None, :]).max() <= 0
        T = xi @ x.x
        rhs = bool(np.all(np.abs(T[:, None] - T[None, :]) <= delta))
        mismatches += lhs != rhs
    record("constraint-map equivalence", mismatches == 0, f"1000 draws, {mismatches} mismatches")
    assert mismatches == 0


def test_monotonicity_and_soundness():
    n_samples = 2000
    problems, feasible = [], 0
    for seed in range(20):
        inst = generate_instance(seed, n_tasks=10, n_workers=3, delta=25.0, epsilon=0.05)
        trace = sequential_solve(inst)
        g = [r.g for r in trace.iterations]
        if any(b < a - 1e-6 for a, b in zip(g, g[1:])):
            problems.append(f"seed {seed}: g decreased")
        if trace.feasible_for_dro:
            feasible += 1
            cvar, _ = worst_case_cvar(trace.final_assignment, trace.final_scaling, inst)
            eps = inst.epsilon
            viol = evaluate(trace.final_assignment, inst, n_samples, seed).violation_probability
            if cvar > 1e-6:
                problems.append(f"seed {seed}: cvar {cvar:.2e}")
            if viol > eps + 3 * math.sqrt(eps * (1 - eps) / n_samples):
                problems.append(f"seed {seed}: violation {viol:.4f}")
    ok = not problems
    record("algorithm monotonicity and soundness", ok,
           f"20 instances 10x3 (delta 25), {feasible} ended with v = 0; " + ("; ".join(problems) or "no violations"))
    assert ok


def test_safe_approximation():
    rng = np.random.default_rng(606)
    checked, worst_excess, seed = 0, -math.inf, 0
    while checked < 20 and seed < 500:
        m = int(rng.integers(2, 4))
        inst = generate_instance(seed, n_tasks=4, n_workers=m, delta=float(rng.uniform(8, 25)),
                                 epsilon=float(rng.uniform(0.05, 0.3)))
        seed += 1
        trace = sequential_solve(inst)
        if not trace.feasible_for_dro:
            continue
        checked += 1
        grid = worst_case_violation_grid(trace.final_assignment, inst, points_per_axis=5)
        worst_excess = max(worst_excess, grid - inst.epsilon)
    ok = checked == 20 and worst_excess <= 1e-6
    record("safe-approximation check", ok,
           f"{checked} instances with v = 0, max (grid violation - epsilon) = {worst_excess:.3e} (tol 1e-6)")
    assert ok


def test_solver_unit_suite():
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", "tests/test_lp.py"],
                          cwd=ROOT, capture_output=True, text=True)
    tail = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr.strip()[-200:]
    ok = proc.returncode == 0
    record("solver unit suite", ok, f"tests/test_lp.py: {tail}")
    assert ok


# -- desk-scale experiment ------------------------------------------------------

DESK = GeneratorParams(n_tasks=12, n_workers=3, delta=5.0, epsilon=0.05)
DESK_BUDGET_S = 1800.0


@pytest.fixture(scope="module")
def desk():
    return run_experiment(DESK, SolverConfig(), n_replications=50, n_samples=2000, base_seed=0,
                          time_budget=DESK_BUDGET_S)


def _desk_context(s):
    return f"{s.n_succeeded}/50 replications in {s.wall_time_s:.0f}s"


@pytest.mark.slow
def test_desk_dro_violation(desk):
    v = desk.methods["dro"].mean_violation
    ok = v <= 0.05
    record("desk experiment (a) DRO mean violation <= 0.05", ok, f"{v:.4f} over {_desk_context(desk)}")
    assert ok


@pytest.mark.slow
def test_desk_mean_value_violation(desk):
    v = desk.methods["mean"].mean_violation
    ok = v >= 0.20
    record("desk experiment (b) mean-value mean violation >= 0.20", ok, f"{v:.4f} over {_desk_context(desk)}")
    assert ok


@pytest.mark.slow
def test_desk_reward_ordering(desk):
    dro, mean = desk.methods["dro"].mean_reward, desk.methods["mean"].mean_reward
    ok = dro < mean
    record("desk experiment (c) DRO reward < mean-value reward", ok, f"{dro:.2f} vs {mean:.2f}")
    assert ok


@pytest.mark.slow
def test_desk_success_rate(desk):
    ok = desk.success_rate >= 0.9
    reasons = sorted({f["error"].split(":")[0] for f in desk.failures})
    record("desk experiment (d) >= 90% replication success", ok,
           f"{_desk_context(desk)} (budget {DESK_BUDGET_S:.0f}s); failures: {', '.join(reasons) or 'none'}")
    assert ok
