import itertools
import math

import numpy as np
import pytest

from panbayes.bayes_net import (
    BayesNet,
    BNStructure,
    ConditionalTables,
    InvalidStructureError,
    chow_liu_tree,
    dumps_model,
    enumerate_candidates,
    greedy_structure_learn,
    independent_structure,
    learn_parameters_central,
    load_model,
    loads_model,
    prior_sample,
    privbayes,
    save_model,
    topological_order,
)
from panbayes.discrete_prob import AttributeSchema, Dataset, cross_entropy, entropy_bits
from panbayes.dp_core import InvalidParameterError, RandomSource
from panbayes.fixtures import synthetic_network

ABC = AttributeSchema.from_sizes([("X1", 2), ("X3", 2), ("X5", 2)])


def chain_net(strength=0.9):
    s = BNStructure(ABC.names, {"X1": (), "X3": ("X1",), "X5": ("X3",)}, ABC.names)
    flip = [[strength, 1 - strength], [1 - strength, strength]]
    theta = {"X1": np.array([[0.6, 0.4]]), "X3": np.array(flip), "X5": np.array(flip)}
    return BayesNet(ABC, s, ConditionalTables(theta))


def test_topological_order():
    free = independent_structure(ABC)
    assert topological_order(free) == list(free.insertion_order)
    # insertion order lists the child first, so the sort has to reorder
    s = BNStructure(ABC.names, {"X5": ("X3",), "X3": ("X1",)}, ("X5", "X3", "X1"))
    assert topological_order(s) == ["X1", "X3", "X5"]
    cyc = BNStructure(ABC.names, {"X1": ("X5",), "X3": ("X1",), "X5": ("X3",)}, ABC.names)
    with pytest.raises(InvalidStructureError):
        topological_order(cyc)


def test_structure_validation():
    with pytest.raises(InvalidStructureError):
        BNStructure(("A",), {"A": ("A",)}, ("A",))
    with pytest.raises(InvalidStructureError):
        BNStructure(("A",), {"A": ("Z",)}, ("A",))


def test_parameter_shape_checked():
    s = independent_structure(ABC)
    with pytest.raises(InvalidStructureError):
        BayesNet(ABC, s, ConditionalTables({n: np.array([[1.0]]) for n in ABC.names}))


def test_joint_probability():
    s = independent_structure(ABC)
    net = BayesNet(ABC, s, ConditionalTables({n: np.array([[0.5, 0.5]]) for n in ABC.names}))
    assert net.joint_probability((0, 1, 0)) == 2.0**-3
    chain = chain_net()
    total = 0.0
    for x in itertools.product((0, 1), repeat=3):
        brute = [0.6, 0.4][x[0]] * [[0.9, 0.1], [0.1, 0.9]][x[0]][x[1]] * [[0.9, 0.1], [0.1, 0.9]][x[1]][x[2]]
        assert chain.joint_probability(x) == pytest.approx(brute, abs=1e-15)
        total += chain.joint_probability(x)
    assert total == pytest.approx(1.0, abs=1e-9)
    assert chain.joint_table().probs.sum() == pytest.approx(1.0, abs=1e-12)


def test_prior_sample_marginals():
    net = synthetic_network()
    data = prior_sample(net, 100_000, RandomSource(2))
    for name in net.schema.names:
        emp = np.bincount(data.column(name), minlength=net.schema.size(name)) / data.n
        assert np.abs(emp - net.marginal(name)).max() < 0.01


def test_prior_sample_edge_cases():
    s = independent_structure(ABC)
    det = BayesNet(ABC, s, ConditionalTables({"X1": np.array([[0.0, 1.0]]), "X3": np.array([[1.0, 0.0]]),
                                              "X5": np.array([[0.0, 1.0]])}))
    data = prior_sample(det, 50, RandomSource(0))
    assert set(data.rows) == {(1, 0, 1)}
    assert prior_sample(det, 0, RandomSource(0)).n == 0


def test_prior_sample_deterministic_per_seed():
    net = synthetic_network()
    a = prior_sample(net, 500, RandomSource(9)).values
    assert np.array_equal(a, prior_sample(net, 500, RandomSource(9)).values)


def test_candidates_include_empty_set_in_order():
    schema = AttributeSchema.from_sizes([("A", 2), ("B", 2), ("C", 2), ("D", 2)])
    cands = enumerate_candidates(schema, ["B", "A"], 2)
    assert cands[:4] == [("C", ()), ("C", ("A",)), ("C", ("B",)), ("C", ("A", "B"))]
    assert len(cands) == 8


def _max_spanning_tree_oracle(data):
    """Exhaustive search over all spanning trees of three nodes."""
    from panbayes.bayes_net import empirical_mi_score

    score = empirical_mi_score(data)
    names = data.schema.names
    pairs = list(itertools.combinations(names, 2))
    best = max(itertools.combinations(pairs, 2), key=lambda es: sum(score(b, (a,)) for a, b in es))
    return {frozenset(e) for e in best}


def test_greedy_recovers_chain():
    data = prior_sample(chain_net(), 100_000, RandomSource(3))
    s = greedy_structure_learn(data, 1)
    assert s.skeleton() == {frozenset(("X1", "X3")), frozenset(("X3", "X5"))}
    assert s.skeleton() == _max_spanning_tree_oracle(data) == chow_liu_tree(data)
    # edges point away from the schema-first root
    assert s.parent_sets["X3"] == ("X1",) and s.parent_sets["X5"] == ("X3",)


def test_greedy_private_concentrates_with_huge_budget():
    data = prior_sample(chain_net(), 5000, RandomSource(4))
    ref = greedy_structure_learn(data, 1)
    hits = sum(greedy_structure_learn(data, 1, 1e6, RandomSource(i)) == ref for i in range(100))
    assert hits >= 99


def test_greedy_two_attributes():
    schema = AttributeSchema.from_sizes([("A", 2), ("B", 2)])
    data = Dataset.from_rows(schema, [(0, 0), (1, 1), (0, 0), (1, 0)])
    s = greedy_structure_learn(data, 1)
    assert s.parent_sets["B"] == ("A",) and s.parent_sets["A"] == ()


def test_greedy_errors(tiny):
    with pytest.raises(InvalidParameterError):
        greedy_structure_learn(tiny, 3)
    with pytest.raises(InvalidParameterError):
        greedy_structure_learn(tiny.take([]), 1)
    with pytest.raises(InvalidParameterError):
        greedy_structure_learn(tiny, 1, 1.0)


def test_degree_bound_and_parent_count():
    net = synthetic_network()
    data = prior_sample(net, 20_000, RandomSource(5))
    # jitter: strictly positive MI gains make every round take min(i-1, k) parents
    for k in (1, 2, 3):
        s = greedy_structure_learn(data, k)
        assert s.degree <= k
        for i, name in enumerate(s.insertion_order):
            assert len(s.parent_sets[name]) == min(i, k)
            assert all(s.insertion_order.index(p) < i for p in s.parent_sets[name])


def test_parameters_central(tiny):
    s = independent_structure(tiny.schema)
    theta = learn_parameters_central(tiny, s).theta
    assert theta["A"].tolist() == [[5 / 8, 3 / 8]]
    s2 = greedy_structure_learn(tiny, 1)
    exact = learn_parameters_central(tiny, s2)
    noisy = [learn_parameters_central(tiny, s2, 1e9, RandomSource(i)) for i in range(5)]
    for cp in noisy:
        for x in s2.nodes:
            assert np.abs(cp.theta[x] - exact.theta[x]).max() < 1e-3


def test_parameters_noisy_slices_normalized(tiny):
    s = greedy_structure_learn(tiny, 2)
    for i in range(20):
        learn_parameters_central(tiny, s, 0.1, RandomSource(i)).check(1e-9)


def test_empty_slice_is_uniform():
    data = Dataset.from_rows(ABC, [(0, 0, 0), (0, 1, 1)])
    s = BNStructure(ABC.names, {"X3": ("X1",), "X5": ("X3",)}, ABC.names)
    theta = learn_parameters_central(data, s).theta
    assert theta["X3"][1].tolist() == [0.5, 0.5]


def test_privbayes_closed_loop():
    net = synthetic_network()
    data = prior_sample(net, 100_000, RandomSource(6))
    s = greedy_structure_learn(data, 1)
    model = BayesNet(data.schema, s, learn_parameters_central(data, s, smooth=True))
    h = entropy_bits(net.joint_table())
    assert cross_entropy(net.joint_table(), model.joint_table()) - h < 0.05


def test_privbayes_runs(tiny):
    m = privbayes(tiny, 1, 1.0, RandomSource(0), smooth=True)
    m.parameters.check()
    assert (m.joint_table().probs > 0).all()


def test_model_roundtrip(tmp_path):
    net = synthetic_network()
    back = loads_model(dumps_model(net))
    assert back.structure == net.structure
    for n in net.schema.names:
        assert np.array_equal(back.parameters.theta[n], net.parameters.theta[n])
    save_model(net, tmp_path / "m.json")
    assert dumps_model(load_model(tmp_path / "m.json")) == dumps_model(net)


def test_fixture_entropy_committed():
    assert abs(entropy_bits(synthetic_network().joint_table()) - 5.12) <= 0.005
    assert math.isclose(synthetic_network().joint_table().probs.sum(), 1.0, abs_tol=1e-12)
