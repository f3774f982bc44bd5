"""Single-trader strategies against the noisy market maker.

The target strategy pushes the noisy state back to a fixed target ``q*``
every round, as far as the trade cap allows. Under ``omega ~ C'(q*)`` every
such trade has non-negative expected profit, and a profit of at least
``chi`` whenever the noisy state starts ``gamma`` or more away from the
target. The deviation strategy copies the target strategy except in one
round, where it pushes toward ``q* + k/2`` instead; comparing the two
exposes how much the noisy states leak about a single trade.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Iterable

import numpy as np

from .cost_market import CostFunction, chi
from .noisy_market import LedgerBatch, NoiseProcess, TradeLedger, as_generator, maker_loss, simulate

Z95 = NormalDist().inv_cdf(0.975)


@dataclass(frozen=True)
class ZeroStrategy:
    descriptor: str = "zero"

    def decide(self, trades, noisy_states, rng):
        return np.zeros(noisy_states.shape[0])


@dataclass(frozen=True)
class TargetStrategy:
    target: float
    k: float
    descriptor: str = field(init=False)

    def __post_init__(self):
        if not self.k > 0.0:
            raise ValueError("k must be positive")
        object.__setattr__(self, "descriptor", f"target(q*={self.target!r}, k={self.k!r})")

    def trade(self, qprime):
        qprime = np.asarray(qprime, dtype=float)
        up = np.minimum(self.target - qprime, self.k)
        down = -np.minimum(qprime - self.target, self.k)
        return np.where(qprime <= self.target, up, down)

    def decide(self, trades, noisy_states, rng):
        return self.trade(noisy_states[:, -1])


@dataclass(frozen=True)
class DeviationStrategy:
    """Target strategy except at ``round``, where it trades to ``q* + k/2``
    if that is reachable and otherwise does nothing."""

    target: float
    k: float
    round: int
    descriptor: str = field(init=False)

    def __post_init__(self):
        if self.round < 1:
            raise ValueError("deviation round must be at least 1")
        object.__setattr__(
            self, "descriptor", f"deviation(q*={self.target!r}, k={self.k!r}, t={self.round})"
        )

    @property
    def deviation_target(self) -> float:
        return self.target + self.k / 2.0

    def decide(self, trades, noisy_states, rng):
        qprime = noisy_states[:, -1]
        if noisy_states.shape[1] != self.round:
            return TargetStrategy(self.target, self.k).trade(qprime)
        gap = self.deviation_target - qprime
        return np.where(np.abs(gap) <= self.k, gap, 0.0)


def target_strategy(target: float, k: float) -> TargetStrategy:
    return TargetStrategy(target, k)


def deviation_strategy(target: float, k: float, round: int) -> DeviationStrategy:
    return DeviationStrategy(target, k, round)


def per_trade_expected_profit(C: CostFunction, target: float, qprime, x):
    """Trader's expected profit from buying ``x`` at ``qprime`` when
    ``omega ~ Bernoulli(C'(target))``; equals the maker's expected loss on the trade."""
    qprime = np.asarray(qprime, dtype=float)
    x = np.asarray(x, dtype=float)
    pi = C.price(target) * x - (np.asarray(C.cost(qprime + x)) - np.asarray(C.cost(qprime)))
    return float(pi) if np.ndim(pi) == 0 else pi


def _as_batch(traces) -> LedgerBatch:
    if isinstance(traces, LedgerBatch):
        return traces
    if isinstance(traces, TradeLedger):
        traces = [traces]
    traces = list(traces)
    stack = lambda name: np.stack([getattr(tr, name) for tr in traces])
    return LedgerBatch(
        stack("x"), stack("q"), stack("eta"), stack("payment"),
        np.array([tr.final_state for tr in traces]), np.array([tr.final_eta for tr in traces]),
    )


@dataclass(frozen=True)
class LossLowerBound:
    chi: float
    far_frequency: np.ndarray  # per round, fraction of traces with |q'_t - q*| >= gamma
    bound: float
    mean_profit: float  # mean over traces of the summed per-trade expected profits
    profit_stderr: float


def lemma3_lower_bound(traces: LedgerBatch | Iterable[TradeLedger], target: float, gamma: float, C: CostFunction) -> LossLowerBound:
    """Empirical ``chi * sum_t Pr(|q'_t - q*| >= gamma)`` over target-strategy traces."""
    batch = _as_batch(traces)
    c = chi(C, target, gamma)
    far = np.abs(batch.qprime - target) >= gamma
    freq = far.mean(axis=0)
    pi = per_trade_expected_profit(C, target, batch.qprime, batch.x)
    totals = pi.sum(axis=1)
    stderr = float(totals.std(ddof=1) / math.sqrt(len(totals))) if len(totals) > 1 else 0.0
    return LossLowerBound(c, freq, c * math.fsum(freq), float(totals.mean()), stderr)


def sample_outcomes(C: CostFunction, target: float, trials: int, rng) -> np.ndarray:
    """``omega ~ Bernoulli(C'(target))`` for each trace."""
    return (as_generator(rng).random(trials) < C.price(target)).astype(int)


@dataclass(frozen=True)
class MeanCI:
    mean: float
    low: float
    high: float
    stderr: float


def mean_ci(values) -> MeanCI:
    v = np.asarray(values, dtype=float)
    mean = float(v.mean())
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
    return MeanCI(mean, mean - Z95 * se, mean + Z95 * se, se)


def loss_curve(
    C: CostFunction,
    noise: NoiseProcess,
    k: float,
    target: float,
    gamma: float,
    horizons: Iterable[int],
    trials: int,
    rng=None,
    fee: float = 0.0,
    min_unit: float = 0.0,
) -> list[dict]:
    """Mean maker loss under the target strategy at each horizon, with the
    matching lower bound. One batch of length ``max(horizons)`` is simulated
    and every horizon reads a prefix of it."""
    horizons = sorted(set(int(h) for h in horizons))
    if not horizons or horizons[0] < 1:
        raise ValueError("horizons must be positive")
    sim_rng, omega_rng = as_generator(rng).spawn(2)
    batch = simulate(TargetStrategy(target, k), noise, C, k, horizons[-1], fee, min_unit, sim_rng, trials)
    omegas = sample_outcomes(C, target, trials, omega_rng)
    c = chi(C, target, gamma)
    far_freq = (np.abs(batch.qprime - target) >= gamma).mean(axis=0)
    rows = []
    for T in horizons:
        ci = mean_ci(maker_loss(batch, omegas, T))
        rows.append({
            "T": T, "mean_loss": ci.mean, "ci_low": ci.low, "ci_high": ci.high,
            "stderr": ci.stderr, "lemma3_bound": c * math.fsum(far_freq[:T]),
        })
    return rows


# ---------------------------------------------------------------------------
# Privacy probe


@dataclass(frozen=True)
class ProbeResult:
    """Monte Carlo evidence about the privacy level at round ``t``.

    ``p1``/``p2``: chance that ``q'_{t+1}`` lands within ``k/4`` of the
    target given ``q'_t`` did, under the target and deviation strategies.
    ``implied_eps`` is ``log(p1 / (1 - p1))``, the privacy level forced by
    these estimates (negative values mean no constraint). ``direct_eps`` is
    ``log(p1 / p2)`` from the two branches directly.
    """

    t: int
    trials: int
    n_cond: int
    p1: float
    p2: float
    implied_eps: float
    ci_low: float
    ci_high: float
    direct_eps: float


def _logit(p: float) -> float:
    if p <= 0.0:
        return -math.inf
    if p >= 1.0:
        return math.inf
    return math.log(p / (1.0 - p))


def _log_ratio(a: float, b: float) -> float:
    if a == b:
        return 0.0
    if b <= 0.0:
        return math.inf
    if a <= 0.0:
        return -math.inf
    return math.log(a / b)


class InsufficientEvents(RuntimeError):
    def __init__(self, message: str, n_cond: int):
        super().__init__(message)
        self.n_cond = n_cond


def privacy_probe(
    C: CostFunction,
    noise: NoiseProcess,
    k: float,
    target: float,
    round: int,
    trials: int,
    rng=None,
    min_events: int = 30,
) -> ProbeResult:
    """Estimate the privacy leaked at ``round`` by a one-round deviation.

    Both strategies are simulated with the same noise stream, so their
    histories coincide through round ``round - 1`` and differ only in the
    trade at ``round``.
    """
    if round < 1:
        raise ValueError("round must be at least 1")
    rng = as_generator(rng)
    seed = int(rng.integers(2**63))
    honest = simulate(TargetStrategy(target, k), noise, C, k, round, rng=seed, trials=trials)
    deviant = simulate(DeviationStrategy(target, k, round), noise, C, k, round, rng=seed, trials=trials)
    if not np.array_equal(honest.qprime, deviant.qprime):
        raise AssertionError("noise stream leaked the deviating trade")

    radius = k / 4.0
    cond = np.abs(honest.qprime[:, round - 1] - target) < radius
    n_cond = int(cond.sum())
    if n_cond < min_events:
        raise InsufficientEvents(f"only {n_cond} of {trials} traces reached the target region at t={round}", n_cond)
    hit1 = np.abs(honest.final_qprime[cond] - target) < radius
    hit2 = np.abs(deviant.final_qprime[cond] - target) < radius
    p1 = float(hit1.mean())
    p2 = float(hit2.mean())
    half = Z95 * math.sqrt(p1 * (1.0 - p1) / n_cond)
    return ProbeResult(
        t=round,
        trials=trials,
        n_cond=n_cond,
        p1=p1,
        p2=p2,
        implied_eps=_logit(p1),
        ci_low=_logit(max(p1 - half, 0.0)),
        ci_high=_logit(min(p1 + half, 1.0)),
        direct_eps=_log_ratio(p1, p2),
    )
