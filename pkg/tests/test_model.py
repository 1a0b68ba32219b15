import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fairsched.model import (
    Assignment,
    Box,
    Instance,
    Polytope,
    ScalingPair,
    build_constraint_system,
    derive_seed,
    generate_instance,
    make_rng,
    validate_instance,
)


def _inst(l, u, mu, eps=0.05, delta=1.0):
    n = len(mu)
    return Instance(np.ones((n, 2)), np.array(mu, float), Box(np.array(l, float), np.array(u, float)), delta, eps)


class TestValidation:
    def test_interior_point_is_valid(self):
        assert validate_instance(_inst([0], [2], [1])) == []

    def test_boundary_mean_is_flagged(self):
        assert validate_instance(_inst([0], [2], [2])) == ["mu not interior"]

    def test_epsilon_range(self):
        assert validate_instance(_inst([0], [2], [1], eps=1.2)) == ["epsilon out of (0,1)"]

    def test_negative_delta(self):
        assert any("delta" in p for p in validate_instance(_inst([0], [2], [1], delta=-1)))

    def test_unbounded_polytope_rejected(self):
        inst = Instance(np.ones((2, 2)), np.zeros(2), Polytope(np.array([[1.0, 0.0], [0.0, 1.0]]), np.ones(2)),
                        1.0, 0.1)
        assert any("bounded" in p for p in validate_instance(inst))

    def test_flat_polytope_rejected(self):
        G = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
        h = np.array([1.0, 0.0, 1.0, -1.0])  # second coordinate pinned to 1
        inst = Instance(np.ones((2, 2)), np.array([0.5, 1.0]), Polytope(G, h), 1.0, 0.1)
        assert validate_instance(inst)

    def test_box_polytope_valid(self):
        inst = _inst([0, 0], [2, 3], [1, 1])
        poly = inst.replace(support=inst.support.to_polytope())
        assert validate_instance(poly) == []

    def test_zero_width_box_rejected(self):
        problems = validate_instance(_inst([1, 0], [1, 2], [1, 1]))
        assert "support requires l < u componentwise" in problems


@given(st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_box_polytope_membership_agrees(n, seed):
    rng = np.random.default_rng(seed)
    lo = rng.uniform(-5, 5, n)
    box = Box(lo, lo + rng.uniform(0.1, 3, n))
    poly = box.to_polytope()
    for xi in rng.uniform(-6, 9, (20, n)):
        assert box.contains(xi) == poly.contains(xi)


class TestAssignment:
    def test_row_sums_enforced(self):
        with pytest.raises(ValueError):
            Assignment(np.array([[1, 1], [0, 1]]))

    def test_binary_enforced(self):
        with pytest.raises(ValueError):
            Assignment(np.array([[0.5, 0.5]]))

    def test_from_workers_round_trip(self):
        x = Assignment.from_workers([2, 0, 1], 3)
        assert x.workers.tolist() == [2, 0, 1]
        assert x.reward(np.arange(9).reshape(3, 3)) == 2 + 3 + 7


class TestScaling:
    def test_uniform_valid(self):
        assert ScalingPair.uniform(3).violations() == []

    def test_floor_cap(self):
        with pytest.raises(ValueError):
            ScalingPair(np.full((2, 2), 0.25), np.full((2, 2), 0.25), floor=0.3)

    def test_sum_violation_reported(self):
        s = ScalingPair(np.full((2, 2), 0.3), np.full((2, 2), 0.25), floor=1e-4)
        assert s.violations() == ["scaling matrices must each sum to 1"]


class TestConstraintSystem:
    def test_worked_example(self):
        x = Assignment(np.array([[1, 0]]))
        cs = build_constraint_system(x, ScalingPair.uniform(2), 5.0)
        assert cs.K == 8
        np.testing.assert_allclose(cs.a[1], [0.25])
        assert cs.b[1] == pytest.approx(-1.25)
        np.testing.assert_allclose(cs.a[5], [-0.25])
        assert cs.b[5] == pytest.approx(-1.25)
        assert cs.pair(2) == (1, 2, "alpha")
        assert cs.pair(6) == (1, 2, "beta")

    def test_diagonal_rows_vacuous(self):
        rng = np.random.default_rng(3)
        x = Assignment.from_workers(rng.integers(0, 3, 6), 3)
        a = rng.uniform(0.1, 1, (3, 3))
        s = ScalingPair(a / a.sum(), a / a.sum(), floor=1e-4)
        cs = build_constraint_system(x, s, 2.0)
        for j in range(3):
            k = j * 3 + j
            assert not cs.a[k].any() and not cs.a[9 + k].any()
            assert cs.b[k] == pytest.approx(-2.0 * s.alpha[j, j])

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            build_constraint_system(Assignment(np.eye(2, dtype=int)), ScalingPair.uniform(3), 1.0)

    @given(st.integers(1, 6), st.integers(1, 4), st.integers(0, 2**32 - 1))
    def test_equivalence_with_pairwise_balance(self, n, m, seed):
        rng = np.random.default_rng(seed)
        x = Assignment.from_workers(rng.integers(0, m, n), m)
        a, b = rng.uniform(0.01, 1, (m, m)), rng.uniform(0.01, 1, (m, m))
        s = ScalingPair(a / a.sum(), b / b.sum(), floor=min(1e-4, 1 / m**2))
        delta = rng.uniform(0, 10)
        xi = rng.uniform(0, 10, (50, n))
        lhs = build_constraint_system(x, s, delta).evaluate(xi).max(axis=1) <= 0
        T = xi @ x.x
        rhs = (np.abs(T[:, :, None] - T[:, None, :]) <= delta).all(axis=(1, 2))
        assert np.array_equal(lhs, rhs)


class TestGenerator:
    def test_deterministic(self):
        a, b = generate_instance(11), generate_instance(11)
        assert np.array_equal(a.rewards, b.rewards) and np.array_equal(a.mu, b.mu)

    def test_defaults_shape_and_validity(self):
        inst = generate_instance(5)
        assert (inst.n_tasks, inst.n_workers, inst.delta, inst.epsilon) == (20, 5, 5.0, 0.05)
        assert validate_instance(inst) == []

    def test_mu_law_of_large_numbers(self):
        inst = generate_instance(1, n_tasks=10_000, n_workers=1)
        assert 48 <= inst.mu.mean() <= 52

    @given(st.integers(0, 2**64 - 1))
    def test_strictly_interior(self, seed):
        inst = generate_instance(seed, n_tasks=15, n_workers=2)
        assert np.all(inst.support.lower < inst.mu) and np.all(inst.mu < inst.support.upper)
        assert np.all(inst.support.lower >= 0)
        np.testing.assert_allclose(0.5 * (inst.support.lower + inst.support.upper), inst.mu)


def test_rng_streams_are_distinct_and_reproducible():
    a = make_rng(42, 1).random(5)
    assert np.array_equal(a, make_rng(42, 1).random(5))
    assert not np.array_equal(a, make_rng(42, 2).random(5))
    assert derive_seed(6, 3) == 5
