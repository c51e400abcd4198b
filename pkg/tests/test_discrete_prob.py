import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from panbayes.discrete_prob import (
    AttributeSchema,
    Dataset,
    FrequencyTable,
    ProbabilityTable,
    SchemaError,
    build_frequency_table,
    cross_entropy,
    empirical_cross_entropy,
    entropy_bits,
    kl_divergence,
    marginalize,
    mi_sensitivity,
    mutual_information,
    mutual_information_direct,
    read_dataset,
    smooth_add_one,
    to_probability,
    write_dataset,
    write_schema_sidecar,
)
from panbayes.dp_core import InvalidParameterError
from panbayes.fixtures import synthetic_network

# Values frozen from a 30-digit mpmath evaluation of the closed forms.
H_3_2_2_1 = 1.90563906222956643195
MI_TINY_AB = 0.00322894362036349712
SENS_8_BINARY = 0.37677016125643678628
SENS_8_GENERAL = 0.59591947393986133632


def test_schema_invariants():
    with pytest.raises(SchemaError):
        AttributeSchema((("A", ("0", "1")), ("A", ("0",))))
    with pytest.raises(SchemaError):
        AttributeSchema((("A", ()),))
    s = AttributeSchema.from_sizes([("A", 2), ("B", 3)])
    assert s.joint_size() == 6 and s.ordered(["B", "A"]) == ("A", "B")


def test_dataset_rejects_out_of_domain(tiny):
    with pytest.raises(SchemaError):
        Dataset.from_rows(tiny.schema, [(0, 0, 2)])


def test_frequency_tables(tiny):
    assert build_frequency_table(tiny, ["A", "B"]).counts.tolist() == [3, 2, 2, 1]
    assert build_frequency_table(tiny, ["A"]).counts.tolist() == [5, 3]
    assert build_frequency_table(tiny, ["A", "B", "C"]).counts.tolist() == [3, 0, 0, 2, 0, 2, 0, 1]
    with pytest.raises(SchemaError):
        build_frequency_table(tiny, ["Z"])


def test_marginalize(tiny):
    ab = build_frequency_table(tiny, ["A", "B"])
    assert marginalize(ab, ["A"]).counts.tolist() == [5, 3]
    assert marginalize(ab, ["B"]).counts.tolist() == build_frequency_table(tiny, ["B"]).counts.tolist()
    p = to_probability(build_frequency_table(tiny, ["A"]))
    assert np.array_equal(marginalize(p, ["A"]).probs, p.probs)
    with pytest.raises(SchemaError):
        marginalize(ab, ["C"])


def test_marginalize_commutes_with_counting_exhaustively(tiny):
    names = tiny.schema.names
    for r in range(1, 4):
        for full in itertools.combinations(names, r):
            table = build_frequency_table(tiny, full)
            for q in range(0, r + 1):
                for keep in itertools.combinations(full, q):
                    assert np.array_equal(marginalize(table, keep).counts, build_frequency_table(tiny, keep).counts)


def test_to_probability():
    t = FrequencyTable(("A", "B"), (2, 2), np.array([3, 2, 2, 1.0]), 8)
    assert to_probability(t, 8).probs.tolist() == [3 / 8, 1 / 4, 1 / 4, 1 / 8]
    noisy = FrequencyTable(("A", "B"), (2, 2), np.array([3.1, 1.9, 1.6, 1.0]), 8)
    p = to_probability(noisy, 8)
    assert p.has_sum_defect and p.probs.sum() == pytest.approx(0.95)
    neg = FrequencyTable(("A", "B"), (2, 2), np.array([3.5, -0.5, 2.0, 1.0]), 8)
    r = to_probability(neg, renormalize=True)
    assert abs(r.probs.sum() - 1) <= 1e-12 and (r.probs >= 0).all()
    with pytest.raises(InvalidParameterError):
        to_probability(t, 0)


def test_smooth_add_one():
    t = FrequencyTable(("A", "B"), (2, 2), np.array([3, 2, 2, 1.0]), 8)
    assert np.allclose(smooth_add_one(t).probs, [4 / 12, 3 / 12, 3 / 12, 2 / 12])
    z = FrequencyTable(("A", "B"), (2, 2), np.zeros(4), 0)
    assert np.allclose(smooth_add_one(z).probs, 0.25)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 50), min_size=1, max_size=12))
def test_smoothing_positive_and_normalized(counts):
    t = FrequencyTable(("X",), (len(counts),), np.array(counts, dtype=float), float(sum(counts)))
    p = smooth_add_one(t).probs
    assert (p > 0).all() and abs(p.sum() - 1) <= 1e-12


def test_entropy_values():
    assert entropy_bits([0.25] * 4) == 2.0
    assert entropy_bits([1.0, 0.0, 0.0]) == 0.0
    assert entropy_bits([3 / 8, 1 / 4, 1 / 4, 1 / 8]) == pytest.approx(H_3_2_2_1, abs=1e-14)


@pytest.mark.parametrize("d", range(2, 65))
def test_entropy_uniform_is_log_d(d):
    assert entropy_bits(np.full(d, 1 / d)) == pytest.approx(math.log2(d), abs=1e-12)


def test_mutual_information(tiny):
    coins = ProbabilityTable(("X", "Y"), (2, 2), np.full(4, 0.25))
    assert mutual_information(coins, ["X"], ["Y"]) == pytest.approx(0.0, abs=1e-15)
    same = ProbabilityTable(("X", "Y"), (2, 2), np.array([0.5, 0, 0, 0.5]))
    assert mutual_information(same, ["X"], ["Y"]) == pytest.approx(1.0)
    ab = to_probability(build_frequency_table(tiny, ["A", "B"]))
    assert mutual_information(ab, ["A"], ["B"]) == pytest.approx(MI_TINY_AB, abs=1e-14)
    assert mutual_information_direct(ab, ["A"], ["B"]) == pytest.approx(MI_TINY_AB, abs=1e-14)
    with pytest.raises(SchemaError):
        mutual_information(ab, ["A"], ["A", "B"])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.01, 1), min_size=2, max_size=4), st.lists(st.floats(0.01, 1), min_size=2, max_size=4))
def test_mi_zero_on_product_tables(px, py):
    px, py = np.array(px) / sum(px), np.array(py) / sum(py)
    joint = ProbabilityTable(("X", "Y"), (px.size, py.size), np.outer(px, py).ravel())
    assert mutual_information(joint, ["X"], ["Y"]) < 1e-12


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.0, 1), min_size=6, max_size=6))
def test_mi_three_entropy_form_matches_double_sum(w):
    w = np.array(w) + 1e-3
    joint = ProbabilityTable(("X", "Y"), (2, 3), w / w.sum())
    a = mutual_information(joint, ["X"], ["Y"])
    assert a >= 0 and a == pytest.approx(mutual_information_direct(joint, ["X"], ["Y"]), abs=1e-12)


def test_kl_and_cross_entropy():
    p = np.array([0.5, 0.25, 0.25])
    assert kl_divergence(p, p) == 0
    assert kl_divergence(p, np.full(3, 1 / 3)) == pytest.approx(math.log2(3) - entropy_bits(p))
    assert kl_divergence([0.5, 0.5], [1.0, 0.0]) == math.inf
    assert cross_entropy([0.5, 0.5], [1.0, 0.0]) == math.inf
    assert cross_entropy(p, p) == pytest.approx(entropy_bits(p))


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 10), st.integers(0, 2**31))
def test_cross_entropy_decomposition(d, seed):
    g = np.random.default_rng(seed)
    p, q = g.dirichlet(np.ones(d)), g.dirichlet(np.ones(d))
    assert abs(cross_entropy(p, q) - kl_divergence(p, q) - entropy_bits(p)) <= 1e-9


def test_synthetic_network_entropy():
    p = synthetic_network().joint_table()
    assert p.d == 192
    assert cross_entropy(p, p) == pytest.approx(5.12, abs=0.005)
    assert cross_entropy(p, ProbabilityTable.uniform(p.attrs, p.sizes)) == pytest.approx(7.58, abs=0.005)


def test_empirical_cross_entropy(tiny, rng):
    one = Dataset.from_rows(tiny.schema, [(0, 0, 0)])
    assert empirical_cross_entropy(one, lambda x: 0.5) == 1.0
    with pytest.raises(InvalidParameterError):
        empirical_cross_entropy(one.take([]), lambda x: 0.5)
    assert empirical_cross_entropy(one, lambda x: 0.0) == math.inf


def test_empirical_cross_entropy_converges():
    from panbayes.bayes_net import prior_sample
    from panbayes.dp_core import RandomSource

    net = synthetic_network()
    test = prior_sample(net, 20_000, RandomSource(1))
    h = entropy_bits(net.joint_table())
    lp = net.log2_probabilities(test.values)
    se = lp.std() / math.sqrt(test.n)
    assert abs(empirical_cross_entropy(test, net.joint_probability) - h) < 3 * se


def test_mi_sensitivity():
    assert mi_sensitivity(8, True).delta == pytest.approx(SENS_8_BINARY, abs=1e-15)
    assert mi_sensitivity(8, False).delta == pytest.approx(SENS_8_GENERAL, abs=1e-15)
    assert mi_sensitivity(10**6, True).delta < mi_sensitivity(10**3, True).delta
    with pytest.raises(InvalidParameterError):
        mi_sensitivity(1, True)


def test_dataset_io_roundtrip(tiny, tmp_path):
    write_dataset(tiny, tmp_path / "d.csv")
    write_schema_sidecar(tiny.schema, tmp_path / "d.schema")
    back = read_dataset(tmp_path / "d.csv", tmp_path / "d.schema")
    assert back.schema == tiny.schema and np.array_equal(back.values, tiny.values)
    inferred = read_dataset(tmp_path / "d.csv")
    assert inferred.schema.names == ("A", "B", "C")


def test_dataset_io_errors(tmp_path):
    (tmp_path / "bad.csv").write_text("A,B\n1,2\n3\n")
    with pytest.raises(SchemaError):
        read_dataset(tmp_path / "bad.csv")
    (tmp_path / "d.csv").write_text("A\nx\n")
    (tmp_path / "s.txt").write_text("A=y,z\n")
    with pytest.raises(SchemaError):
        read_dataset(tmp_path / "d.csv", tmp_path / "s.txt")
