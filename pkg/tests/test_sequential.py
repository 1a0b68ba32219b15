import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairsched.lp import SolverError
from fairsched.model import Assignment, Box, Instance, ScalingPair, generate_instance
from fairsched.reformulation import oracle_worst_case_cvar, worst_case_cvar
from fairsched.sequential import (
    SolverConfig,
    mean_value_solve,
    sequential_solve,
    solve_assignment_subproblem,
    solve_scaling_subproblem,
)

TWO_BY_TWO = np.array([[10.0, 1.0], [10.0, 1.0]])


def _small(seed, n=4, m=2, delta=3.0, eps=0.1):
    return generate_instance(seed, n_tasks=n, n_workers=m, delta=delta, epsilon=eps)


class TestConfig:
    def test_floor_default_and_cap(self):
        assert SolverConfig().resolve_floor(3) == 1e-4
        assert SolverConfig().resolve_floor(100) == pytest.approx(1 / 20000)
        with pytest.raises(ValueError):
            SolverConfig(scaling_floor=0.2).resolve_floor(2)

    def test_big_m_defaults(self):
        inst = Instance(TWO_BY_TWO, np.ones(2), Box(np.full(2, 0.9), np.full(2, 1.1)), 0.05, 0.05)
        cfg = SolverConfig()
        assert cfg.resolve_big_m(inst, cvar_scale=False) == pytest.approx(2000.0)
        assert cfg.resolve_big_m(inst) == pytest.approx(2000.0 / 1e-4)
        assert SolverConfig(big_m=7.0).resolve_big_m(inst) == 7.0

    @pytest.mark.parametrize("kw", [{"max_iters": 0}, {"tol": 0.0}, {"big_m": -1.0}, {"scaling_floor": 0.0}])
    def test_rejects_bad_values(self, kw):
        with pytest.raises(ValueError):
            SolverConfig(**kw)


class TestAssignmentSubproblem:
    def test_single_worker(self):
        inst = _small(2, n=5, m=1)
        r = solve_assignment_subproblem(ScalingPair.uniform(1), inst, SolverConfig())
        assert r.x.x.ravel().tolist() == [1] * 5 and r.v == 0.0
        assert r.g == pytest.approx(inst.rewards[:, 0].sum())

    def test_two_by_two(self):
        # The spread of any assignment here can be pushed past delta with probability one
        # (two-point law on opposite box corners keeps the mean), so no assignment reaches
        # v = 0. At uniform scaling the split is still the best choice.
        inst = Instance(TWO_BY_TWO, np.ones(2), Box(np.full(2, 0.9), np.full(2, 1.1)), 0.05, 0.05)
        cfg = SolverConfig(big_m=1e4)
        s = ScalingPair.uniform(2, cfg.resolve_floor(2))
        r = solve_assignment_subproblem(s, inst, cfg)
        assert sorted(r.x.workers.tolist()) == [0, 1]
        split_cvar = oracle_worst_case_cvar(r.x, s, inst)
        assert r.v == pytest.approx(split_cvar, abs=1e-3)
        assert r.g == pytest.approx(11.0 - 1e4 * r.v, abs=1e-6)
        for w in ([0, 0], [1, 1]):
            assert oracle_worst_case_cvar(Assignment.from_workers(w, 2), s, inst) > split_cvar

    def test_huge_delta_is_unconstrained(self):
        inst = _small(5, n=6, m=3, delta=1e6)
        r = solve_assignment_subproblem(ScalingPair.uniform(3, 1e-4), inst, SolverConfig())
        assert r.v == 0.0
        assert r.g == pytest.approx(inst.rewards.max(axis=1).sum(), rel=1e-9)

    def test_fixed_and_forbidden_pairs(self):
        inst = _small(5, n=4, m=2, delta=1e6)
        best = inst.rewards.argmax(axis=1)
        inst = inst.replace(fixed=((0, 1 - best[0]),), forbidden=((1, best[1]),))
        r = solve_assignment_subproblem(ScalingPair.uniform(2, 1e-4), inst, SolverConfig())
        assert r.x.workers[0] == 1 - best[0] and r.x.workers[1] != best[1]

    def test_node_limit_raises_with_incumbent(self):
        inst = generate_instance(1, n_tasks=10, n_workers=3, delta=5.0)
        with pytest.raises(SolverError) as info:
            solve_assignment_subproblem(ScalingPair.uniform(3, 1e-4), inst, SolverConfig(max_nodes=3))
        assert info.value.result is not None

    def test_v_matches_standalone_cvar(self):
        inst = _small(11, n=4, m=2, delta=2.0)
        s = ScalingPair.uniform(2, 1e-4)
        r = solve_assignment_subproblem(s, inst, SolverConfig())
        assert r.v == pytest.approx(max(0.0, worst_case_cvar(r.x, s, inst)[0]), abs=1e-7)


class TestScalingSubproblem:
    def test_single_worker_singleton(self):
        inst = _small(3, n=3, m=1)
        s, _ = solve_scaling_subproblem(Assignment(np.ones((3, 1), dtype=int)), inst, SolverConfig())
        assert s.alpha.tolist() == [[1.0]] and s.beta.tolist() == [[1.0]]

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25)
    def test_reevaluates_and_improves(self, seed):
        rng = np.random.default_rng(seed)
        m = int(rng.integers(2, 4))
        inst = _small(seed, n=int(rng.integers(2, 5)), m=m, delta=float(rng.uniform(0, 6)))
        x = Assignment.from_workers(rng.integers(0, m, inst.n_tasks), m)
        cfg = SolverConfig()
        s, value = solve_scaling_subproblem(x, inst, cfg)
        assert s.violations() == []
        assert worst_case_cvar(x, s, inst)[0] == pytest.approx(value, abs=1e-6)
        incoming = ScalingPair.uniform(m, cfg.resolve_floor(m))
        assert value <= worst_case_cvar(x, incoming, inst)[0] + 1e-9

    def test_symmetric_instance_no_worse_than_uniform(self):
        inst = Instance(np.ones((4, 2)), np.full(4, 5.0), Box(np.full(4, 4.0), np.full(4, 6.0)), 1.0, 0.1)
        x = Assignment.from_workers([0, 1, 0, 1], 2)
        s, value = solve_scaling_subproblem(x, inst, SolverConfig())
        assert value <= worst_case_cvar(x, ScalingPair.uniform(2, 1e-4), inst)[0] + 1e-9


class TestSequential:
    def test_single_iteration(self):
        tr = sequential_solve(_small(1), SolverConfig(max_iters=1))
        assert len(tr.iterations) == 1 and not tr.converged
        assert tr.final_scaling.alpha.tolist() == [[0.25, 0.25], [0.25, 0.25]]

    def test_single_worker(self):
        inst = _small(4, n=5, m=1)
        tr = sequential_solve(inst)
        assert tr.feasible_for_dro and tr.converged
        assert tr.g == pytest.approx(inst.rewards.sum())

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=15, deadline=None)
    def test_monotone_and_sound(self, seed):
        rng = np.random.default_rng(seed)
        inst = _small(seed, n=int(rng.integers(2, 6)), m=int(rng.integers(2, 4)),
                      delta=float(rng.uniform(2, 15)), eps=float(rng.uniform(0.05, 0.3)))
        tr = sequential_solve(inst)
        g = [r.g for r in tr.iterations]
        assert all(b >= a - 1e-6 for a, b in zip(g, g[1:]))
        if tr.feasible_for_dro:
            assert worst_case_cvar(tr.final_assignment, tr.final_scaling, inst)[0] <= 1e-6
            assert tr.final_assignment.reward(inst.rewards) <= inst.rewards.max(axis=1).sum() + 1e-9

    def test_generic_path_matches_box_path(self):
        inst = _small(21, n=4, m=3, delta=6.0)
        a = sequential_solve(inst)
        b = sequential_solve(inst, SolverConfig(force_generic_path=True))
        assert [r.g for r in a.iterations] == pytest.approx([r.g for r in b.iterations], abs=1e-6)
        assert np.array_equal(a.final_assignment.x, b.final_assignment.x)

    def test_highs_backend_agrees(self):
        inst = _small(8, n=5, m=2, delta=4.0)
        a = sequential_solve(inst)
        b = sequential_solve(inst, SolverConfig(backend="highs"))
        assert a.g == pytest.approx(b.g, rel=1e-6, abs=1e-6)

    def test_cvar_value_recorded_per_iteration(self):
        inst = _small(13, n=4, m=2, delta=3.0)
        tr = sequential_solve(inst)
        first = tr.iterations[0]
        s0 = ScalingPair.uniform(2, 1e-4)
        x0 = solve_assignment_subproblem(s0, inst, SolverConfig()).x
        assert first.cvar_value == pytest.approx(worst_case_cvar(x0, s0, inst)[0], abs=1e-9)


class TestMeanValue:
    def test_single_worker(self):
        inst = _small(4, n=5, m=1)
        r = mean_value_solve(inst)
        assert r.v == 0.0 and r.g == pytest.approx(inst.rewards.sum())

    def test_two_by_two(self):
        inst = Instance(TWO_BY_TWO, np.ones(2), Box(np.full(2, 0.9), np.full(2, 1.1)), 0.0, 0.05)
        r = mean_value_solve(inst, SolverConfig(big_m=1e4))
        assert sorted(r.x.workers.tolist()) == [0, 1] and r.v == 0.0 and r.g == pytest.approx(11.0)

    def test_delta_at_total_mean_is_unconstrained(self):
        inst = _small(6, n=6, m=3)
        inst = inst.replace(delta=float(inst.mu.sum()))
        r = mean_value_solve(inst)
        assert r.v == 0.0 and r.g == pytest.approx(inst.rewards.max(axis=1).sum())

    def test_balance_holds_on_means(self):
        inst = _small(9, n=6, m=3, delta=20.0)
        r = mean_value_solve(inst)
        loads = inst.mu @ r.x.x
        assert loads.max() - loads.min() <= inst.delta + r.v + 1e-7
