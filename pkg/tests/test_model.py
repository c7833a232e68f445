import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from reconlab.ensembles import Multigraph, sample_poisson_multigraph
from reconlab.model import (
    GraphicalModel, ModelSpec, coloring_model, coloring_table, ising_model, ising_table, ising_table_eps,
    log_weight, log_weights, spin_glass_model, weight_table,
)

graphs = st.builds(
    lambda n, rows: Multigraph(n, np.array([(u % n, v % n, 0) for u, v in rows], dtype=np.int64).reshape(-1, 3)),
    st.integers(1, 7), st.lists(st.tuples(st.integers(0, 6), st.integers(0, 6)), max_size=12),
)


def test_ising_table_values():
    assert np.array_equal(ising_table(0.0), np.ones((2, 2)))
    assert np.allclose(ising_table(0.5), [[1.5, 0.5], [0.5, 1.5]])
    assert np.allclose(ising_table(0.5), 2 * ising_table_eps(0.25))
    with pytest.raises(ValueError):
        ising_table(1.0)


def test_weight_table_validation():
    with pytest.raises(ValueError):
        weight_table([[1, 2], [3, 1]])
    with pytest.raises(ValueError):
        weight_table([[0, 0], [0, 0]])
    with pytest.raises(ValueError):
        weight_table([[1, -1], [-1, 1]])


def test_spin_glass_half_plus_half_minus():
    eps = 0.5
    gm = spin_glass_model(sample_poisson_multigraph(10, 1.0, 0), eps, 0)
    assert np.allclose(gm.tables[0], gm.tables[1])
    g = sample_poisson_multigraph(5000, 2.0, 1)
    gm = spin_glass_model(g, 0.2, 7)
    frac = np.mean(gm.graph.edges[:, 2] == 1)
    assert abs(frac - 0.5) < 3 * math.sqrt(0.25 / g.m)


def test_spin_glass_all_plus_is_ferromagnet():
    g = sample_poisson_multigraph(8, 1.5, 3)
    sg = spin_glass_model(g, 0.2, 0, p_plus=1.0)
    ferro = GraphicalModel(g, (ising_table_eps(0.2),))
    X = np.random.default_rng(0).integers(0, 2, (50, 8))
    assert np.allclose(log_weights(sg, X), log_weights(ferro, X))


def test_coloring_examples():
    tri = Multigraph.from_edges(3, [(0, 1), (1, 2), (0, 2)])
    gm = coloring_model(tri, 3, 0.0)
    assert log_weight(gm, [0, 1, 2]) == 0.0
    assert log_weight(gm, [0, 0, 1]) == -math.inf
    assert np.array_equal(coloring_table(3, 1.0), np.ones((3, 3)))
    edge = coloring_model(Multigraph.from_edges(2, [(0, 1)]), 2, 0.0)
    assert [log_weight(edge, x) > -math.inf for x in ([0, 1], [1, 0], [0, 0], [1, 1])] == [True, True, False, False]


def test_log_weight_examples():
    assert log_weight(ising_model(Multigraph(3, np.zeros((0, 3), dtype=np.int64)), 0.3), [0, 1, 0]) == 0.0
    edge = ising_model(Multigraph.from_edges(2, [(0, 1)]), 0.5)
    assert math.isclose(log_weight(edge, [0, 0]), math.log(1.5))
    loop = ising_model(Multigraph.from_edges(1, [(0, 0)]), 0.5)
    assert math.isclose(log_weight(loop, [1]), math.log(1.5))
    double = ising_model(Multigraph.from_edges(2, [(0, 1), (0, 1)]), 0.5)
    assert math.isclose(log_weight(double, [0, 1]), 2 * math.log(0.5))
    field = ising_model(Multigraph(2, np.zeros((0, 3), dtype=np.int64)), 0.0, lam=0.5)
    assert math.isclose(log_weight(field, [0, 1]), math.log(1.5 * 0.5))


@settings(max_examples=50, deadline=None)
@given(graphs, st.floats(0, 0.95), st.integers(0, 1000))
def test_ising_flip_symmetry_and_edge_order(g, theta, seed):
    gm = ising_model(g, theta)
    x = np.random.default_rng(seed).integers(0, 2, g.n)
    assert math.isclose(log_weight(gm, x), log_weight(gm, 1 - x), abs_tol=1e-12)
    perm = np.random.default_rng(seed).permutation(g.m)
    shuffled = GraphicalModel(Multigraph(g.n, g.edges[perm]), gm.tables)
    assert math.isclose(log_weight(gm, x), log_weight(shuffled, x), abs_tol=1e-12)


@settings(max_examples=50, deadline=None)
@given(graphs, st.floats(0.05, 1.0), st.integers(0, 1000))
def test_coloring_color_permutation_invariance(g, eps, seed):
    rng = np.random.default_rng(seed)
    gm = coloring_model(g, 4, eps)
    x = rng.integers(0, 4, g.n)
    sigma = rng.permutation(4)
    assert math.isclose(log_weight(gm, x), log_weight(gm, sigma[x]), abs_tol=1e-12)


def test_model_validation():
    g = Multigraph.from_edges(2, [(0, 1)]).with_weights([1])
    with pytest.raises(ValueError):
        GraphicalModel(g, (ising_table(0.3),))
    with pytest.raises(ValueError):
        GraphicalModel(g, (ising_table(0.3),), vertex_bias=[1.0, 0.0])
    gm = ising_model(Multigraph.from_edges(2, [(0, 1)]), 0.3)
    with pytest.raises(ValueError):
        log_weight(gm, [0, 2])
    with pytest.raises(ValueError):
        log_weight(gm, [0])


def test_symmetric_root_marginal_flag():
    g = sample_poisson_multigraph(6, 1.0, 0)
    assert ising_model(g, 0.5).symmetric_root_marginal
    assert not ising_model(g, 0.5, 0.2).symmetric_root_marginal
    assert coloring_model(g, 3, 0.3).symmetric_root_marginal
    assert spin_glass_model(g, 0.1, 0).symmetric_root_marginal


def test_model_spec_roundtrip_and_build():
    spec = ModelSpec("ising", theta=0.4, lam=0.1, gamma=1.0, seed=5)
    back = ModelSpec.from_json(spec.to_json())
    assert back == spec
    assert ModelSpec.from_json('{"kind": "ising", "theta": 0.2, "lambda": 0.3}').lam == 0.3
    g = sample_poisson_multigraph(10, 1.0, 0)
    gm = ModelSpec("spinglass", eps=0.2).build(g, 0)
    assert gm.kind == "spinglass" and len(gm.tables) == 2
    assert ModelSpec("ising", eps=0.25).build(g).params["theta"] == 0.5
    with pytest.raises(ValueError):
        ModelSpec("coloring", eps=0.2).build(g)
    with pytest.raises(ValueError):
        ModelSpec("potts", eps=0.2).build(g)
    inst = ModelSpec("coloring", q=3, eps=0.3, k=2).sample_instance(10, 1)
    assert np.all(inst.graph.degrees() == 3)
