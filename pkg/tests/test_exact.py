import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from reconlab.ensembles import Multigraph, sample_poisson_multigraph
from reconlab.exact import (
    BudgetExceeded, ImpossibleEvidence, constrained_partition, exact_conditional_root, exact_joint_product_tv,
    exact_marginal, exact_partition, joint_distribution, magnetization_levels, tilt_distribution, tree_boundary_terms,
    tv,
)
from reconlab.model import coloring_model, ising_model, spin_glass_model

EDGE = Multigraph.from_edges(2, [(0, 1)])
TRIANGLE = Multigraph.from_edges(3, [(0, 1), (1, 2), (0, 2)])
EMPTY3 = Multigraph(3, np.zeros((0, 3), dtype=np.int64))


def random_instance(seed, n_max=8):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, n_max + 1))
    g = sample_poisson_multigraph(n, float(rng.uniform(0.5, 1.5)), rng)
    kind = seed % 3
    if kind == 0:
        return ising_model(g, float(rng.uniform(0, 0.9)), float(rng.choice([0.0, 0.3])))
    if kind == 1:
        return coloring_model(g, 3, float(rng.uniform(0.05, 1)))
    return spin_glass_model(g, float(rng.uniform(0.05, 0.5)), rng)


def test_partition_examples():
    assert math.isclose(exact_partition(coloring_model(EMPTY3, 4, 0.5)), math.log(4 ** 3))
    assert math.isclose(exact_partition(ising_model(EDGE, 0.5)), math.log(4))
    assert math.isclose(exact_partition(coloring_model(TRIANGLE, 3, 0.0)), math.log(6))


def test_partition_matches_bruteforce():
    for s in range(10):
        gm = random_instance(s)
        z = sum(oracles.weight(gm, x) for x in oracles.configs(gm.q, gm.n))
        assert math.isclose(exact_partition(gm), math.log(z), rel_tol=1e-12)


def test_budget_is_enforced():
    gm = ising_model(sample_poisson_multigraph(30, 1.0, 0), 0.3)
    with pytest.raises(BudgetExceeded):
        exact_partition(gm, budget=2 ** 20)


def test_marginal_examples():
    g = sample_poisson_multigraph(7, 1.5, 2)
    assert np.allclose(exact_marginal(ising_model(g, 0.7), [3]), [0.5, 0.5])
    assert math.isclose(exact_marginal(ising_model(EDGE, 0.5), [0, 1])[0, 0], 0.375)
    assert np.allclose(exact_marginal(coloring_model(TRIANGLE, 3, 0.0), [1]), [1 / 3] * 3)
    j = joint_distribution(random_instance(4))
    assert math.isclose(j.sum(), 1.0, rel_tol=1e-12) and np.all(j >= 0)


def test_marginal_axis_order():
    gm = ising_model(Multigraph.from_edges(3, [(0, 1)]), 0.5, 0.3)
    m01 = exact_marginal(gm, [0, 2])
    m10 = exact_marginal(gm, [2, 0])
    assert np.allclose(m01, m10.T)


def test_conditional_root_examples():
    gm = ising_model(EDGE, 0.5)
    assert np.allclose(exact_conditional_root(gm, 0, {0: 1}), [0, 1])
    assert np.allclose(exact_conditional_root(gm, 0, {1: 0}), [0.75, 0.25])
    for s in range(12):
        gm = random_instance(s)
        rng = np.random.default_rng(s)
        ev = {int(v): int(rng.integers(gm.q)) for v in range(1, gm.n) if rng.random() < 0.4}
        try:
            want = oracles.conditional_root(gm, 0, ev)
        except (ZeroDivisionError, FloatingPointError):
            continue
        if not np.all(np.isfinite(want)):
            continue
        assert np.allclose(exact_conditional_root(gm, 0, ev), want, atol=1e-12)


def test_conditional_root_impossible_evidence():
    gm = coloring_model(Multigraph.from_edges(3, [(0, 1), (0, 2)]), 2, 0.0)
    with pytest.raises(ImpossibleEvidence):
        exact_conditional_root(gm, 0, {1: 0, 2: 1})


def test_joint_product_tv_examples():
    g = sample_poisson_multigraph(6, 1.5, 1)
    assert exact_joint_product_tv(ising_model(g, 0.0), 0, 1) < 1e-14
    assert math.isclose(exact_joint_product_tv(ising_model(EDGE, 0.5), 0, 1), 0.25)
    assert exact_joint_product_tv(coloring_model(g, 3, 1.0), 0, 1) < 1e-14


@pytest.mark.parametrize("seed", range(30))
def test_two_tv_computations_agree(seed):
    gm = random_instance(seed, n_max=10 if seed % 3 != 1 else 8)
    for t in range(4):
        a = exact_joint_product_tv(gm, 0, t, method="joint")
        b = exact_joint_product_tv(gm, 0, t, method="boundary")
        assert abs(a - b) <= 1e-10


@pytest.mark.parametrize("seed", range(8))
def test_tv_matches_bruteforce(seed):
    gm = random_instance(seed, n_max=6)
    for t in range(3):
        assert abs(exact_joint_product_tv(gm, 0, t) - oracles.joint_product_tv(gm, 0, t)) < 1e-10


def test_tv_nondecreasing_in_theta():
    g = sample_poisson_multigraph(8, 1.5, 5)
    vals = [exact_joint_product_tv(ising_model(g, th), 0, 2) for th in np.linspace(0, 0.9, 10)]
    assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))


def test_constrained_partition_examples():
    gm = ising_model(EDGE, 0.5)
    assert math.isclose(constrained_partition(gm, 0.0), math.log(1.0))
    assert math.isclose(constrained_partition(gm, 1.0), math.log(1.5))
    assert constrained_partition(gm, 2.0) == -math.inf
    with pytest.raises(ValueError):
        constrained_partition(gm, 0.5)


def test_constrained_levels_partition_the_cube():
    gm = ising_model(sample_poisson_multigraph(9, 1.2, 3), 0.6)
    levels = magnetization_levels(gm)
    total = np.logaddexp.reduce(list(levels.values()))
    assert math.isclose(total, exact_partition(gm), rel_tol=1e-12)
    for m, lz in levels.items():
        assert math.isclose(constrained_partition(gm, m / gm.n), lz, rel_tol=1e-12)


def test_constrained_partition_requires_zero_field_ising():
    with pytest.raises(ValueError):
        constrained_partition(ising_model(EDGE, 0.5, 0.2), 0.0)


def test_tilt_examples():
    p = np.array([0.2, 0.5, 0.3])
    assert np.allclose(tilt_distribution(p, np.full(3, 1 / 3)), p)
    assert np.allclose(tilt_distribution([0.5, 0.5], [0.9, 0.1]), [0.9, 0.1])
    with pytest.raises(ZeroDivisionError):
        tilt_distribution([1.0, 0.0], [0.0, 1.0])


@settings(max_examples=300, deadline=None)
@given(st.integers(2, 6), st.integers(0, 2 ** 31), st.floats(0.0, 1.0))
def test_tilt_inequality(size, seed, scale):
    rng = np.random.default_rng(seed)
    p = rng.dirichlet(np.ones(size))
    q0 = np.full(size, 1 / size)
    q = (1 - scale) * q0 + scale * rng.dirichlet(np.ones(size))
    if np.dot(p, q) == 0:
        return
    assert tv(tilt_distribution(p, q), p) <= 3 * size ** 2 * tv(q, q0) + 1e-12


@pytest.mark.parametrize("seed", range(12))
def test_ball_residual_factorization(seed):
    gm = random_instance(seed, n_max=8)
    for ell in (1, 2):
        terms = tree_boundary_terms(gm, 0, min(1, ell), ell)
        assert terms["tilt_error"] < 1e-12
        assert terms["lhs"] <= terms["rhs"] + 1e-12
