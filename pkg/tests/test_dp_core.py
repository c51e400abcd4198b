import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from panbayes.dp_core import (
    BudgetExhaustedError,
    BudgetLedger,
    InvalidParameterError,
    PrivacyBudget,
    RandomSource,
    Sensitivity,
    compose_sequential,
    exponential_probabilities,
    exponential_select,
    laplace_cdf,
    perturb_counts,
    randomized_response,
    randomized_response_law,
    sample_laplace,
)


def test_budget_and_sensitivity_validation():
    with pytest.raises(InvalidParameterError):
        PrivacyBudget(0.0)
    with pytest.raises(InvalidParameterError):
        PrivacyBudget(-1.0)
    with pytest.raises(InvalidParameterError):
        Sensitivity(-0.1)
    assert PrivacyBudget(1.0).split(4).epsilon == 0.25


def test_laplace_variance(rng):
    x = sample_laplace(0.0, 1.0, rng, 1_000_000)
    assert abs(x.var() / 2.0 - 1) < 0.02


def test_laplace_median(rng):
    x = sample_laplace(5.0, 1.0, rng, 100_000)
    assert abs(np.median(x) - 5.0) < 0.02


def test_laplace_cdf_agrees_with_draws(rng):
    mu, b = 0.0, 1.0
    t = mu - b * math.log(2 * 0.25)  # closed-form CDF gives 1 - 0.5 * 0.5 = 0.75
    assert float(laplace_cdf(t, mu, b)) == pytest.approx(0.75)
    frac = (sample_laplace(mu, b, rng, 200_000) <= t).mean()
    assert abs(frac - 0.75) / 0.75 < 0.01


def test_laplace_rejects_nonpositive_scale(rng):
    with pytest.raises(InvalidParameterError):
        sample_laplace(0.0, 0.0, rng)


def test_perturb_counts_zero_noise_limit(rng):
    out = perturb_counts([3, 2, 2, 1], Sensitivity(2), PrivacyBudget(math.inf), True, rng)
    assert out.tolist() == [3, 2, 2, 1]


def test_perturb_counts_clamp(rng):
    for _ in range(100):
        assert (perturb_counts([0, 0], Sensitivity(2), PrivacyBudget(0.1), True, rng) >= 0).all()


def test_perturb_counts_variance_and_unbiased(rng):
    out = np.array([perturb_counts([10], Sensitivity(2), PrivacyBudget(0.5), False, rng)[0] for _ in range(100_000)])
    assert abs(out.var() / 32.0 - 1) < 0.05
    se = out.std() / math.sqrt(out.size)
    assert abs(out.mean() - 10) < 3 * se


def test_perturb_counts_empty(rng):
    assert perturb_counts([], Sensitivity(2), PrivacyBudget(1.0), True, rng).size == 0


def test_exponential_uniform_on_equal_scores(rng):
    draws = np.array([exponential_select([0.3, 0.3, 0.3], Sensitivity(1), 1.0, rng) for _ in range(100_000)])
    freq = np.bincount(draws, minlength=3) / draws.size
    assert np.all(np.abs(freq - 1 / 3) < 0.01)


def test_exponential_ratio_is_e(rng):
    draws = np.array([exponential_select([1.0, 0.0], Sensitivity(1), PrivacyBudget(2.0), rng) for _ in range(100_000)])
    p0 = (draws == 0).mean()
    assert abs(p0 / (1 - p0) / math.e - 1) < 0.03


def test_exponential_zero_budget_is_uniform():
    assert np.allclose(exponential_probabilities([5, 1, 1], Sensitivity(1), 0.0), 1 / 3)


def test_exponential_zero_sensitivity_rejected(rng):
    with pytest.raises(InvalidParameterError):
        exponential_select([1.0, 2.0], Sensitivity(0), 1.0, rng)


def test_exponential_large_scores_do_not_overflow():
    p = exponential_probabilities([1e6, 1e6 - 1], Sensitivity(1), 2.0)
    assert np.isfinite(p).all() and p[0] / p[1] == pytest.approx(math.e)


def test_exponential_tv_distance(rng):
    scores = np.array([0.1, 0.5, 0.2, 0.9, 0.0])
    probs = exponential_probabilities(scores, Sensitivity(0.25), 1.0)
    draws = np.array([exponential_select(scores, Sensitivity(0.25), 1.0, rng) for _ in range(100_000)])
    emp = np.bincount(draws, minlength=5) / draws.size
    assert 0.5 * np.abs(emp - probs).sum() < 0.01


def test_randomized_response_law():
    assert randomized_response_law(1)[1] == 0.75
    assert randomized_response_law(0)[1] == 0.25
    for o in (0, 1):
        r = randomized_response_law(1)[o] / randomized_response_law(0)[o]
        assert 1 / 3 <= r <= 3
    assert randomized_response_law(1)[1] / randomized_response_law(0)[1] == 3


def test_randomized_response_empirical(rng):
    out = np.array([randomized_response(1, rng) for _ in range(40_000)])
    assert abs(out.mean() - 0.75) < 0.01
    with pytest.raises(InvalidParameterError):
        randomized_response(2, rng)


def test_compose_sequential():
    assert compose_sequential([PrivacyBudget(0.1), PrivacyBudget(0.1)]).epsilon == pytest.approx(0.2)
    assert compose_sequential([PrivacyBudget(0.5), PrivacyBudget(0.5)]).epsilon == 1.0
    assert compose_sequential([PrivacyBudget(0.3)]).epsilon == 0.3
    with pytest.raises(InvalidParameterError):
        compose_sequential([])


def test_ledger():
    led = BudgetLedger(total=1.0)
    led.debit("freq_query", 0.5)
    led.debit("freq_query", 0.5)
    assert led.spent == 1.0 and led.remaining == 0.0
    assert not led.can_spend(0.1)
    with pytest.raises(BudgetExhaustedError):
        led.debit("freq_query", 0.1)


def test_random_source_determinism():
    a, b = RandomSource(7), RandomSource(7)
    assert np.array_equal(a.uniform(10), b.uniform(10))
    assert np.array_equal(a.child(3).uniform(5), RandomSource(7).child(3).uniform(5))
    # spawn order, not parent draws, fixes the child stream
    c = RandomSource(7)
    c.uniform(100)
    assert np.array_equal(c.spawn().uniform(5), RandomSource(7).spawn().uniform(5))
    assert not np.array_equal(RandomSource(7).child(0).uniform(5), RandomSource(7).child(1).uniform(5))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=8), st.floats(0.01, 10))
def test_exponential_probabilities_normalized(scores, eps):
    p = exponential_probabilities(scores, Sensitivity(1.0), eps)
    assert abs(p.sum() - 1) < 1e-12 and (p >= 0).all()
    # monotone in the score
    order = np.argsort(scores, kind="stable")
    assert np.all(np.diff(p[order]) >= -1e-15)
