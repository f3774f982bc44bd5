"""One-shot wagering mechanisms.

Two mechanisms live here:

* the weighted-score wagering mechanism (WSWM), which pays each bettor her
  wager times the gap between her own score and the wager-weighted mean
  score, and is exactly budget balanced;
* the private wagering mechanism, which replaces every score inside the
  weighted mean by an independent two-point indicator ``x_j`` taking values
  1 or ``-beta``. The indicators are epsilon-DP in the bettor's report, the
  mean is announced publicly, and each bettor's profit follows from the
  announcement plus her own data. Budget balance then holds only in
  expectation, but no bettor can lose more than her wager.

Randomness is always injected as a ``numpy.random.Generator``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .scoring import BRIER, ScoringRule, _check_outcome

ProfitKind = Literal["realized", "expected"]


@dataclass(frozen=True)
class WagerProfile:
    """Reports and wagers of ``n`` bettors on a single binary event."""

    reports: np.ndarray
    wagers: np.ndarray

    def __post_init__(self):
        reports = np.array(self.reports, dtype=float, ndmin=1)
        wagers = np.array(self.wagers, dtype=float, ndmin=1)
        if reports.ndim != 1 or reports.shape != wagers.shape:
            raise ValueError("reports and wagers must be 1-D vectors of equal length")
        if reports.size == 0:
            raise ValueError("need at least one bettor")
        if not np.all((reports >= 0.0) & (reports <= 1.0)):
            raise ValueError("reports must lie in [0, 1]")
        if not np.all(np.isfinite(wagers)) or np.any(wagers < 0.0):
            raise ValueError("wagers must be finite and non-negative")
        if not np.any(wagers > 0.0):
            raise ValueError("at least one wager must be positive")
        reports.setflags(write=False)
        wagers.setflags(write=False)
        object.__setattr__(self, "reports", reports)
        object.__setattr__(self, "wagers", wagers)

    @property
    def n(self) -> int:
        return self.reports.size

    def with_report(self, i: int, report: float) -> "WagerProfile":
        reports = self.reports.copy()
        reports[i] = report
        return WagerProfile(reports, self.wagers)

    def with_wager(self, i: int, wager: float) -> "WagerProfile":
        wagers = self.wagers.copy()
        wagers[i] = wager
        return WagerProfile(self.reports, wagers)

    def permuted(self, order: Sequence[int]) -> "WagerProfile":
        order = np.asarray(order)
        return WagerProfile(self.reports[order], self.wagers[order])


@dataclass(frozen=True)
class PrivacyParams:
    """``alpha = 1 - exp(-eps)`` scales expected payoffs, ``beta = exp(-eps)``
    is the magnitude of the indicator's low value."""

    epsilon: float
    alpha: float = field(init=False)
    beta: float = field(init=False)

    def __post_init__(self):
        if not (self.epsilon > 0.0 and math.isfinite(self.epsilon)):
            raise ValueError(f"epsilon must be a positive finite number, got {self.epsilon!r}")
        object.__setattr__(self, "alpha", -math.expm1(-self.epsilon))
        object.__setattr__(self, "beta", math.exp(-self.epsilon))


def privacy_params(epsilon: float) -> PrivacyParams:
    return PrivacyParams(epsilon)


@dataclass(frozen=True)
class ProfitVector:
    """Per-bettor profits, either one realization or an expectation."""

    profits: np.ndarray
    kind: ProfitKind

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.profits, dtype=dtype)

    def __len__(self):
        return len(self.profits)

    def __getitem__(self, i):
        return self.profits[i]

    def __iter__(self):
        return iter(self.profits)

    @property
    def total(self) -> float:
        return math.fsum(self.profits)


@dataclass(frozen=True)
class ScoreIndicator:
    value: float
    owner: int | None = None


def _scores(profile: WagerProfile, rule: ScoringRule, omega: int) -> np.ndarray:
    _check_outcome(omega)
    return np.asarray(rule.evaluate(profile.reports, omega), dtype=float)


def _weighted_mean(wagers: np.ndarray, values: np.ndarray) -> np.ndarray:
    # Works on a single vector or a (trials, n) batch of vectors.
    return values @ wagers / math.fsum(wagers)


def wswm_profits(profile: WagerProfile, rule: ScoringRule = BRIER, omega: int = 1) -> ProfitVector:
    """Deterministic weighted-score wagering payoffs."""
    s = _scores(profile, rule, omega)
    m = profile.wagers
    return ProfitVector(m * (s - _weighted_mean(m, s)), "realized")


def indicator_prob_one(score, params: PrivacyParams):
    """Probability that the indicator equals 1 given the bettor's score."""
    return (params.alpha * np.asarray(score, dtype=float) + params.beta) / (1.0 + params.beta)


def sample_indicator(
    p: float,
    omega: int,
    params: PrivacyParams,
    rng: np.random.Generator,
    rule: ScoringRule = BRIER,
    owner: int | None = None,
) -> ScoreIndicator:
    """Draw one indicator: 1 w.p. ``(alpha*s + beta)/(1 + beta)``, else ``-beta``."""
    prob = indicator_prob_one(rule.evaluate(p, omega), params)
    value = 1.0 if rng.random() < prob else -params.beta
    return ScoreIndicator(value, owner)


def sample_indicators(scores, params: PrivacyParams, rng: np.random.Generator, trials: int | None = None):
    """Vectorised draws; returns shape ``scores.shape`` or ``(trials, n)``."""
    scores = np.asarray(scores, dtype=float)
    size = scores.shape if trials is None else (trials,) + scores.shape
    ones = rng.random(size) < indicator_prob_one(scores, params)
    return np.where(ones, 1.0, -params.beta)


def private_profits_from_indicators(
    profile: WagerProfile, rule: ScoringRule, omega: int, params: PrivacyParams, indicators
) -> np.ndarray:
    """Profits given realized indicators (a vector or a ``(trials, n)`` batch)."""
    s = _scores(profile, rule, omega)
    m = profile.wagers
    x = np.asarray(indicators, dtype=float)
    aggregate = _weighted_mean(m, x)
    return m * (params.alpha * s - np.expand_dims(aggregate, -1))


def private_profits(
    profile: WagerProfile,
    rule: ScoringRule,
    omega: int,
    params: PrivacyParams,
    rng: np.random.Generator,
) -> ProfitVector:
    """One realization of the private wagering mechanism."""
    x = sample_indicators(_scores(profile, rule, omega), params, rng)
    return ProfitVector(private_profits_from_indicators(profile, rule, omega, params, x), "realized")


def private_profits_batch(
    profile: WagerProfile,
    rule: ScoringRule,
    omega: int,
    params: PrivacyParams,
    rng: np.random.Generator,
    trials: int,
) -> np.ndarray:
    """``trials`` independent realizations stacked into a ``(trials, n)`` array."""
    x = sample_indicators(_scores(profile, rule, omega), params, rng, trials)
    return private_profits_from_indicators(profile, rule, omega, params, x)


def expected_private_profits(
    profile: WagerProfile, rule: ScoringRule, omega: int, params: PrivacyParams
) -> ProfitVector:
    """Closed-form expected payoffs: the WSWM payoffs under rule ``alpha * s``."""
    s = params.alpha * _scores(profile, rule, omega)
    m = profile.wagers
    return ProfitVector(m * (s - _weighted_mean(m, s)), "expected")


def expected_profit_given_belief(
    profile: WagerProfile, i: int, belief: float, params: PrivacyParams, rule: ScoringRule = BRIER
) -> float:
    """Bettor ``i``'s expected private-mechanism profit with ``omega ~ Bernoulli(belief)``."""
    if not 0.0 <= belief <= 1.0:
        raise ValueError("belief must lie in [0, 1]")
    win = expected_private_profits(profile, rule, 1, params)[i]
    lose = expected_private_profits(profile, rule, 0, params)[i]
    return belief * win + (1.0 - belief) * lose


def expected_profit_curve(
    profile: WagerProfile,
    i: int,
    belief: float,
    params: PrivacyParams,
    grid: Sequence[float],
    rule: ScoringRule = BRIER,
) -> list[tuple[float, float]]:
    """``(r, E[profit_i])`` for each candidate report ``r`` of bettor ``i``."""
    grid = list(grid)
    if not grid:
        raise ValueError("grid must be non-empty")
    return [
        (float(r), expected_profit_given_belief(profile.with_report(i, r), i, belief, params, rule))
        for r in grid
    ]


def concentration_bound(wagers, params: PrivacyParams, delta: float) -> np.ndarray:
    """Per-bettor Hoeffding radius holding jointly with probability ``1 - delta``."""
    m = np.asarray(wagers, dtype=float)
    if not 0.0 < delta <= 1.0:
        raise ValueError("delta must lie in (0, 1]")
    if np.any(m < 0) or not np.any(m > 0):
        raise ValueError("wagers must be non-negative with at least one positive")
    ratio = np.linalg.norm(m, 2) / np.linalg.norm(m, 1)
    return m * ratio * (1.0 + params.beta) * math.sqrt(math.log(2.0 / delta) / 2.0)


def private_wager_alpha(low: float, high: float, n: int, epsilon: float) -> float:
    """Payoff scale a naive wager-private extension would be forced to use.

    Diagnostic only; no mechanism keeping wagers private is provided.
    """
    if not 0.0 < low <= high:
        raise ValueError("need 0 < low <= high")
    if n < 1:
        raise ValueError("n must be at least 1")
    if not epsilon > 0.0:
        raise ValueError("epsilon must be positive")
    return (low / high) * -math.expm1(-epsilon / n)
