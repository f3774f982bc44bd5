"""Exact privacy audits by enumeration.

The private wagering mechanism has a finite outcome space: each of the
``n`` bettors draws one of two indicator values, so the joint law of the
profit vector has at most ``2**n`` atoms. For pure epsilon-DP over a finite
support, the supremum over events of the probability ratio is attained on
atoms, so enumerating atoms certifies the guarantee exactly.

Atoms are keyed by the indicator bit vector (bit 1 means ``x_j = 1``)
rather than by floating-point profit values, so distinct draws that happen
to collide numerically are never merged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Hashable, Sequence

import numpy as np

from .scoring import BRIER, ScoringRule
from .wagering import (
    PrivacyParams,
    WagerProfile,
    indicator_prob_one,
    private_profits_from_indicators,
    wswm_profits,
)

ENUMERATION_CAP = 15


@dataclass(frozen=True)
class DiscreteDistribution:
    """Finite pmf. ``support[k]`` is a scalar or vector value, ``keys[k]`` its identity."""

    support: np.ndarray
    probabilities: np.ndarray
    keys: tuple[Hashable, ...]

    def __post_init__(self):
        probs = np.asarray(self.probabilities, dtype=float)
        if len(self.keys) != len(probs) or len(self.support) != len(probs):
            raise ValueError("support, keys and probabilities must have equal length")
        if np.any(probs < 0) or abs(math.fsum(probs) - 1.0) > 1e-12:
            raise ValueError("probabilities must be non-negative and sum to 1")
        if len(set(self.keys)) != len(self.keys):
            raise ValueError("atom keys must be distinct")

    def mean(self) -> np.ndarray | float:
        # fsum per coordinate keeps the reduction order-independent.
        support = np.asarray(self.support, dtype=float)
        weighted = support * self.probabilities.reshape((-1,) + (1,) * (support.ndim - 1))
        if support.ndim == 1:
            return math.fsum(weighted)
        return np.array([math.fsum(col) for col in weighted.T])

    def pmf(self) -> dict[Hashable, float]:
        return dict(zip(self.keys, self.probabilities.tolist()))

    def value(self, key: Hashable):
        return self.support[self.keys.index(key)]


def _max_ratio(p: np.ndarray, q: np.ndarray) -> float:
    """Largest ``p/q`` or ``q/p`` over aligned atoms."""
    with np.errstate(divide="ignore", invalid="ignore"):
        fwd = np.where(p > 0, p / q, 1.0)
        bwd = np.where(q > 0, q / p, 1.0)
    return float(max(np.max(fwd), np.max(bwd)))


def indicator_distribution(
    p: float, omega: int, params: PrivacyParams, rule: ScoringRule = BRIER
) -> DiscreteDistribution:
    one = float(indicator_prob_one(rule.evaluate(p, omega), params))
    return DiscreteDistribution(
        support=np.array([1.0, -params.beta]),
        probabilities=np.array([one, 1.0 - one]),
        keys=(1, 0),
    )


def indicator_dp_ratio(
    p: float, p_alt: float, omega: int, params: PrivacyParams, rule: ScoringRule = BRIER
) -> float:
    """Worst likelihood ratio of the indicator under two reports, both directions."""
    a = indicator_distribution(p, omega, params, rule).probabilities
    b = indicator_distribution(p_alt, omega, params, rule).probabilities
    return _max_ratio(a, b)


def _bit_matrix(n: int) -> np.ndarray:
    # Row r holds the binary digits of r, most significant first.
    codes = np.arange(2**n, dtype=np.int64)
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    return ((codes[:, None] >> shifts) & 1).astype(bool)


def _atom_probabilities(bits: np.ndarray, prob_one: np.ndarray) -> np.ndarray:
    per_bettor = np.where(bits, prob_one, 1.0 - prob_one)
    return np.prod(per_bettor, axis=1)


def _check_cap(n: int, cap: int) -> None:
    if n > cap:
        raise ValueError(f"{n} bettors exceeds the enumeration cap of {cap}")


def exact_profit_distribution(
    profile: WagerProfile,
    rule: ScoringRule,
    omega: int,
    params: PrivacyParams,
    cap: int = ENUMERATION_CAP,
) -> DiscreteDistribution:
    """Joint law of the private mechanism's profit vector, one atom per indicator draw."""
    _check_cap(profile.n, cap)
    bits = _bit_matrix(profile.n)
    prob_one = indicator_prob_one(rule.evaluate(profile.reports, omega), params)
    probs = _atom_probabilities(bits, prob_one)
    x = np.where(bits, 1.0, -params.beta)
    profits = private_profits_from_indicators(profile, rule, omega, params, x)
    keys = tuple(tuple(int(b) for b in row) for row in bits)
    return DiscreteDistribution(profits, probs, keys)


def joint_dp_certificate(
    profile: WagerProfile,
    i: int,
    alt_report: float,
    rule: ScoringRule,
    omega: int,
    params: PrivacyParams,
    cap: int = ENUMERATION_CAP,
) -> float:
    """Worst event ratio for the other bettors' profits when bettor ``i``
    switches her report to ``alt_report``.

    The map from indicator draws to ``Pi_{-i}`` does not involve ``p_i``, so
    every event on ``Pi_{-i}`` is a union of the same atoms under both
    reports; the atom maximum (taken in both directions) bounds every event.
    """
    _check_cap(profile.n, cap)
    d = exact_profit_distribution(profile, rule, omega, params, cap)
    d_alt = exact_profit_distribution(profile.with_report(i, alt_report), rule, omega, params, cap)
    others = np.delete(np.arange(profile.n), i)
    # Same atom key must give the same Pi_{-i} under both reports.
    if not np.array_equal(d.support[:, others], d_alt.support[:, others]):
        raise AssertionError("other bettors' profits depend on bettor i's report beyond her indicator")
    return _max_ratio(d.probabilities, d_alt.probabilities)


def certifies(ratio: float, epsilon: float, tol: float = 1e-9) -> bool:
    return ratio <= math.exp(epsilon) + tol


@dataclass(frozen=True)
class TensionReport:
    """Neighbouring-report comparison for the deterministic and private mechanisms.

    ``wswm_ratio`` is infinite whenever the deterministic mechanism's
    ``Pi_{-i}`` differs between the two reports: each is a point mass, so
    no finite epsilon covers them.
    """

    i: int
    report: float
    alt_report: float
    wswm_others: np.ndarray
    wswm_others_alt: np.ndarray
    wswm_ratio: float
    wswm_own_ratio: float
    private_ratio: float
    bound: float


def _point_mass_ratio(a: np.ndarray, b: np.ndarray) -> float:
    return 1.0 if np.array_equal(a, b) else math.inf


def _most_distant_report(p: float, omega: int, rule: ScoringRule) -> float:
    candidates = (0.0, 1.0)
    s = rule.evaluate(p, omega)
    return max(candidates, key=lambda r: abs(rule.evaluate(r, omega) - s))


def budget_balance_privacy_tension(
    profile: WagerProfile,
    rule: ScoringRule,
    omega: int,
    params: PrivacyParams,
    i: int = 0,
    alt_report: float | None = None,
    cap: int = ENUMERATION_CAP,
) -> TensionReport:
    """Compare the WSWM and the private mechanism on one pair of i-neighbours.

    By default the neighbour report is whichever extreme report moves
    bettor ``i``'s score the most.
    """
    if alt_report is None:
        alt_report = _most_distant_report(float(profile.reports[i]), omega, rule)
    alt = profile.with_report(i, alt_report)
    base = np.asarray(wswm_profits(profile, rule, omega))
    moved = np.asarray(wswm_profits(alt, rule, omega))
    others = np.delete(np.arange(profile.n), i)
    return TensionReport(
        i=i,
        report=float(profile.reports[i]),
        alt_report=float(alt_report),
        wswm_others=base[others],
        wswm_others_alt=moved[others],
        wswm_ratio=_point_mass_ratio(base[others], moved[others]),
        wswm_own_ratio=_point_mass_ratio(base[i : i + 1], moved[i : i + 1]),
        private_ratio=joint_dp_certificate(profile, i, alt_report, rule, omega, params, cap),
        bound=math.exp(params.epsilon),
    )


def distributions_match_under_permutation(
    profile: WagerProfile,
    order: Sequence[int],
    rule: ScoringRule,
    omega: int,
    params: PrivacyParams,
    tol: float = 1e-12,
) -> bool:
    """Anonymity check: permuting bettors permutes the exact profit law.

    Bettor ``k`` of the permuted profile is bettor ``order[k]`` of the
    original, so atom ``b`` of the original corresponds to atom
    ``b[order]`` of the permuted profile.
    """
    order = np.asarray(order)
    d = exact_profit_distribution(profile, rule, omega, params)
    d_perm = exact_profit_distribution(profile.permuted(order), rule, omega, params)
    row_of = {key: r for r, key in enumerate(d_perm.keys)}
    for key, prob, value in zip(d.keys, d.probabilities, d.support):
        r = row_of[tuple(key[j] for j in order)]
        if abs(d_perm.probabilities[r] - prob) > tol:
            return False
        if not np.allclose(d_perm.support[r], value[order], rtol=0, atol=tol):
            return False
    return True
