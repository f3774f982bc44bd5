import math
from fractions import Fraction

import mpmath as mp
import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from privmarket.scoring import BRIER
from privmarket.wagering import (
    WagerProfile,
    concentration_bound,
    expected_private_profits,
    expected_profit_curve,
    expected_profit_given_belief,
    indicator_prob_one,
    privacy_params,
    private_profits,
    private_profits_batch,
    private_profits_from_indicators,
    private_wager_alpha,
    sample_indicator,
    wswm_profits,
)

probs = st.floats(0.0, 1.0, allow_nan=False)
wagers = st.floats(0.01, 100.0, allow_nan=False)


@st.composite
def profiles(draw, min_n=1, max_n=12):
    n = draw(st.integers(min_n, max_n))
    reports = draw(st.lists(probs, min_size=n, max_size=n))
    m = draw(st.lists(wagers, min_size=n, max_size=n))
    return WagerProfile(np.array(reports), np.array(m))


def wswm_oracle(reports, wagers, omega):
    """Exact rational evaluation of the weighted-score payoffs."""
    s = [1 - (Fraction(p) - omega) ** 2 for p in reports]
    m = [Fraction(w) for w in wagers]
    avg = sum(mi * si for mi, si in zip(m, s)) / sum(m)
    return [mi * (si - avg) for mi, si in zip(m, s)]


# -- profile validation ------------------------------------------------------


@pytest.mark.parametrize(
    "reports, m",
    [([0.5], [0.0]), ([0.5, 1.2], [1, 1]), ([0.5], [-1.0]), ([0.5, 0.5], [1.0]), ([], [])],
)
def test_profile_rejects_invalid(reports, m):
    with pytest.raises(ValueError):
        WagerProfile(np.array(reports, dtype=float), np.array(m, dtype=float))


def test_zero_wager_bettor_is_allowed():
    prof = WagerProfile(np.array([0.2, 0.9]), np.array([0.0, 1.0]))
    np.testing.assert_array_equal(np.asarray(wswm_profits(prof, BRIER, 1)), [0.0, 0.0])


# -- privacy parameters ------------------------------------------------------


def test_privacy_params_values():
    p = privacy_params(1.0)
    assert p.alpha == pytest.approx(0.63, abs=0.005)
    assert p.alpha == pytest.approx(float(1 - mp.e ** -1), abs=1e-15)
    half = privacy_params(math.log(2))
    assert half.alpha == pytest.approx(0.5, abs=1e-15)
    assert half.beta == pytest.approx(0.5, abs=1e-15)
    assert privacy_params(1e-12).alpha == pytest.approx(0.0, abs=1e-11)


@given(st.floats(1e-6, 30))  # beyond ~36, 1 - e^-eps rounds to 1.0
def test_alpha_plus_beta(eps):
    p = privacy_params(eps)
    assert p.alpha + p.beta == pytest.approx(1.0, abs=1e-15)
    assert 0 < p.alpha < 1 and 0 < p.beta < 1


@pytest.mark.parametrize("eps", [0.0, -1.0, float("inf"), float("nan")])
def test_privacy_params_rejects(eps):
    with pytest.raises(ValueError):
        privacy_params(eps)


# -- WSWM --------------------------------------------------------------------


def test_wswm_two_bettor_example():
    prof = WagerProfile(np.array([0.8, 0.2]), np.array([1.0, 1.0]))
    np.testing.assert_allclose(np.asarray(wswm_profits(prof, BRIER, 1)), [0.3, -0.3], atol=1e-15)


def test_wswm_trivial_cases():
    same = WagerProfile(np.full(4, 0.3), np.array([1.0, 2.0, 3.0, 4.0]))
    np.testing.assert_allclose(np.asarray(wswm_profits(same, BRIER, 0)), 0.0, atol=1e-15)
    single = WagerProfile(np.array([0.7]), np.array([5.0]))
    assert np.asarray(wswm_profits(single, BRIER, 1))[0] == pytest.approx(0.0, abs=1e-15)


@given(profiles(), st.sampled_from([0, 1]))
def test_wswm_matches_rational_oracle_and_balances(prof, omega):
    got = np.asarray(wswm_profits(prof, BRIER, omega))
    want = wswm_oracle(prof.reports.tolist(), prof.wagers.tolist(), omega)
    np.testing.assert_allclose(got, [float(v) for v in want], rtol=1e-12, atol=1e-12)
    assert abs(wswm_profits(prof, BRIER, omega).total) <= 1e-12 * max(1.0, prof.wagers.sum())


# -- indicators ---------------------------------------------------------------


def test_indicator_probabilities_at_extremes():
    p = privacy_params(1.0)
    assert indicator_prob_one(1.0, p) == pytest.approx(1 / (1 + p.beta), abs=1e-15)
    assert indicator_prob_one(0.0, p) == pytest.approx(p.beta / (1 + p.beta), abs=1e-15)


@given(st.floats(0, 1), st.floats(0.01, 10))
def test_indicator_mean_is_scaled_score(score, eps):
    p = privacy_params(eps)
    q = indicator_prob_one(score, p)
    assert q * 1.0 + (1 - q) * (-p.beta) == pytest.approx(p.alpha * score, abs=1e-14)


def test_sample_indicator_frequency(rng):
    p = privacy_params(1.0)
    draws = [sample_indicator(0.9, 1, p, rng, owner=3) for _ in range(20000)]
    assert all(d.owner == 3 and d.value in (1.0, -p.beta) for d in draws)
    freq = np.mean([d.value == 1.0 for d in draws])
    q = indicator_prob_one(BRIER(0.9, 1), p)
    assert abs(freq - q) <= 4 * math.sqrt(q * (1 - q) / 20000)


# -- private mechanism --------------------------------------------------------


def test_private_example_eps_one():
    prof = WagerProfile(np.array([0.8, 0.2]), np.array([1.0, 1.0]))
    got = np.asarray(expected_private_profits(prof, BRIER, 1, privacy_params(1.0)))
    np.testing.assert_allclose(got, [0.1896, -0.1896], atol=5e-5)


@given(profiles(), st.sampled_from([0, 1]), st.floats(0.05, 5))
def test_expected_profits_are_scaled_wswm(prof, omega, eps):
    p = privacy_params(eps)
    got = np.asarray(expected_private_profits(prof, BRIER, omega, p))
    want = p.alpha * np.asarray(wswm_profits(prof, BRIER, omega))
    np.testing.assert_allclose(got, want, rtol=0, atol=1e-12 * max(1.0, prof.wagers.max()))
    assert abs(expected_private_profits(prof, BRIER, omega, p).total) <= 1e-12 * max(1.0, prof.wagers.sum())


@given(profiles(), st.sampled_from([0, 1]), st.floats(0.05, 5))
def test_surrogate_indicators_give_expected_profits(prof, omega, eps):
    p = privacy_params(eps)
    surrogate = p.alpha * BRIER.evaluate(prof.reports, omega)
    got = private_profits_from_indicators(prof, BRIER, omega, p, surrogate)
    np.testing.assert_allclose(got, np.asarray(expected_private_profits(prof, BRIER, omega, p)), atol=1e-12)


def test_single_bettor_indicator_one():
    p = privacy_params(1.0)
    prof = WagerProfile(np.array([0.4]), np.array([2.0]))
    got = private_profits_from_indicators(prof, BRIER, 1, p, np.array([1.0]))
    assert got[0] == pytest.approx(2.0 * (p.alpha * 0.64 - 1.0), abs=1e-15)
    assert got[0] >= -2.0


@given(profiles(), st.sampled_from([0, 1]), st.floats(0.05, 5), st.integers(0, 2**32))
def test_realized_profit_range(prof, omega, eps, seed):
    p = privacy_params(eps)
    pi = private_profits_batch(prof, BRIER, omega, p, np.random.default_rng(seed), 50)
    s = BRIER.evaluate(prof.reports, omega)
    m = prof.wagers
    tol = 1e-12 * max(1.0, m.max())
    assert np.all(pi >= m * (p.alpha * s - 1) - tol)
    assert np.all(pi <= m * (p.alpha * s + p.beta) + tol)
    assert np.all(pi >= -m - tol)


def test_monte_carlo_budget_balance(rng):
    p = privacy_params(1.0)
    prof = WagerProfile(np.array([0.1, 0.5, 0.8, 0.95]), np.array([1.0, 3.0, 0.5, 2.0]))
    totals = private_profits_batch(prof, BRIER, 1, p, rng, 10**6).sum(axis=1)
    se = totals.std(ddof=1) / math.sqrt(totals.size)
    assert abs(totals.mean()) <= 4 * se


def test_monte_carlo_matches_expected_profits(rng):
    p = privacy_params(0.5)
    prof = WagerProfile(np.array([0.3, 0.6, 0.9]), np.array([2.0, 1.0, 1.0]))
    draws = private_profits_batch(prof, BRIER, 0, p, rng, 200_000)
    se = draws.std(axis=0, ddof=1) / math.sqrt(draws.shape[0])
    want = np.asarray(expected_private_profits(prof, BRIER, 0, p))
    assert np.all(np.abs(draws.mean(axis=0) - want) <= 4 * se)


def test_private_profits_single_draw_is_seeded():
    p = privacy_params(1.0)
    prof = WagerProfile(np.array([0.3, 0.6]), np.array([1.0, 1.0]))
    a = private_profits(prof, BRIER, 1, p, np.random.default_rng(5))
    b = private_profits(prof, BRIER, 1, p, np.random.default_rng(5))
    assert a.kind == "realized"
    np.testing.assert_array_equal(np.asarray(a), np.asarray(b))


# -- belief curves: truthfulness, IR, monotonicity ---------------------------


def test_truthful_report_maximises_curve():
    p = privacy_params(1.0)
    prof = WagerProfile(np.array([0.5, 0.1, 0.9]), np.array([1.0, 2.0, 0.5]))
    grid = np.arange(101) / 100
    curve = expected_profit_curve(prof, 0, 0.37, p, grid)
    values = np.array([v for _, v in curve])
    assert grid[np.argmax(values)] == pytest.approx(0.37)
    assert np.sort(values)[-1] - np.sort(values)[-2] > 1e-9


def test_curve_for_zero_wager_is_zero():
    p = privacy_params(1.0)
    prof = WagerProfile(np.array([0.5, 0.1]), np.array([0.0, 2.0]))
    assert all(v == 0.0 for _, v in expected_profit_curve(prof, 0, 0.8, p, [0.0, 0.5, 1.0]))


def test_curve_rejects_empty_grid():
    prof = WagerProfile(np.array([0.5, 0.1]), np.array([1.0, 2.0]))
    with pytest.raises(ValueError):
        expected_profit_curve(prof, 0, 0.5, privacy_params(1.0), [])


@given(profiles(min_n=2), st.floats(0, 1), st.floats(0.05, 5))
def test_individual_rationality(prof, belief, eps):
    prof = prof.with_report(0, belief)
    assert expected_profit_given_belief(prof, 0, belief, privacy_params(eps)) >= -1e-12


@given(profiles(min_n=2), st.floats(0, 1), st.floats(1.01, 10))
def test_monotonicity_in_own_wager(prof, belief, factor):
    p = privacy_params(1.0)
    before = expected_profit_given_belief(prof, 0, belief, p)
    assume(abs(before) > 1e-9)
    after = expected_profit_given_belief(prof.with_wager(0, prof.wagers[0] * factor), 0, belief, p)
    assert np.sign(after) == np.sign(before)
    assert abs(after) > abs(before)


# -- concentration and wager-privacy calculator -------------------------------


def test_concentration_equal_wagers():
    p = privacy_params(1.0)
    n = 16
    radius = (1 + p.beta) * math.sqrt(math.log(2 / 0.05) / 2)
    np.testing.assert_allclose(concentration_bound(np.ones(n), p, 0.05), radius / math.sqrt(n), rtol=1e-14)
    assert concentration_bound(np.ones(1), p, 0.05)[0] == pytest.approx(radius, rel=1e-14)


@given(st.lists(st.floats(0.5, 4.0), min_size=1, max_size=30), st.floats(0.01, 1.0))
def test_concentration_bound_under_wager_range(m, delta):
    p = privacy_params(1.0)
    m = np.array(m)
    low, high, n = m.min(), m.max(), m.size
    coarse = m * high / (math.sqrt(n) * low) * (1 + p.beta) * math.sqrt(math.log(2 / delta) / 2)
    assert np.all(concentration_bound(m, p, delta) <= coarse * (1 + 1e-12))


def test_concentration_rejects():
    p = privacy_params(1.0)
    with pytest.raises(ValueError):
        concentration_bound(np.zeros(3), p, 0.05)
    with pytest.raises(ValueError):
        concentration_bound(np.ones(3), p, 0.0)


def test_private_wager_alpha():
    assert private_wager_alpha(1.0, 2.0, 10, 1.0) == pytest.approx(float(0.5 * (1 - mp.e ** -0.1)), abs=1e-15)
    assert private_wager_alpha(1.0, 2.0, 10, 1.0) == pytest.approx(0.0476, abs=5e-5)
    assert private_wager_alpha(3.0, 3.0, 1, 0.7) == pytest.approx(privacy_params(0.7).alpha, abs=1e-15)
    assert private_wager_alpha(1.0, 2.0, 10**9, 1.0) < 1e-9
    for bad in [(0.0, 1.0, 1, 1.0), (2.0, 1.0, 1, 1.0), (1.0, 2.0, 0, 1.0), (1.0, 2.0, 1, 0.0)]:
        with pytest.raises(ValueError):
            private_wager_alpha(*bad)
