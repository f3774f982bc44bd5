"""Noisy cost-function market maker.

The maker keeps the true state ``q_t`` (sum of past trades) but prices trade
``t`` at the noisy state ``q'_t = q_t + eta_t``. Trades are capped at ``k``
shares. The noise for the next round is drawn *without* access to the
current trade: a process only ever receives ``x_1 .. x_{t-1}`` when asked
for ``eta_{t+1}``, so trade independence holds by construction.

The simulator runs a whole batch of independent markets at once; a single
market is a batch of one.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np

from .cost_market import CostFunction


def as_generator(rng) -> np.random.Generator:
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


def _readonly(view: np.ndarray) -> np.ndarray:
    view = view.view()
    view.flags.writeable = False
    return view


# ---------------------------------------------------------------------------
# Noise processes


class NoiseProcess(Protocol):
    descriptor: str

    def reset(self) -> None: ...

    def next_noise(self, t: int, trades: np.ndarray, noises: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Return ``eta_{t+1}`` for every market in the batch.

        ``trades`` has shape ``(batch, t - 1)`` and ``noises`` ``(batch, t)``;
        ``t = 0`` asks for the initial noise ``eta_1``.
        """
        ...


@dataclass
class ZeroNoise:
    descriptor: str = "none"

    def reset(self) -> None:
        pass

    def next_noise(self, t, trades, noises, rng):
        return np.zeros(noises.shape[0])


@dataclass
class FreshNoise:
    """Independent Laplace noise every round, ignoring all history."""

    scale: float
    descriptor: str = field(init=False)

    def __post_init__(self):
        if not self.scale > 0.0:
            raise ValueError("noise scale must be positive")
        self.descriptor = f"fresh(scale={self.scale!r})"

    def reset(self) -> None:
        pass

    def next_noise(self, t, trades, noises, rng):
        return rng.laplace(0.0, self.scale, size=noises.shape[0])


def dyadic_cover(t: int) -> list[tuple[int, int]]:
    """Binary decomposition of ``[1, t]`` into aligned dyadic intervals.

    One interval per set bit of ``t``, largest first; ``[j 2^l + 1, (j+1) 2^l]``.
    """
    if t < 1:
        raise ValueError("t must be at least 1")
    out = []
    for level in range(t.bit_length() - 1, -1, -1):
        if t >> level & 1:
            j = (t >> level) - 1
            out.append((j * 2**level + 1, (j + 1) * 2**level))
    return out


@dataclass
class TreeCounterNoise:
    """Binary-tree streaming-counter noise.

    ``eta_t`` is the sum of one Laplace term per dyadic interval in the
    binary decomposition of ``[1, t]``. Each interval's term is drawn the
    first time it is needed and reused while it stays in the cover, so the
    noise is correlated across rounds but never looks at trades.
    """

    eps_prime: float
    k: float
    descriptor: str = field(init=False)
    _nodes: dict = field(init=False, repr=False, default_factory=dict)

    def __post_init__(self):
        if not self.eps_prime > 0.0:
            raise ValueError("per-level privacy budget must be positive")
        if not self.k > 0.0:
            raise ValueError("trade bound k must be positive")
        self.descriptor = f"tree(eps_prime={self.eps_prime!r}, k={self.k!r})"

    @property
    def scale(self) -> float:
        return 2.0 * self.k / self.eps_prime

    def reset(self) -> None:
        self._nodes = {}

    def active_terms(self, t: int) -> int:
        return len(dyadic_cover(t))

    def next_noise(self, t, trades, noises, rng):
        u = t + 1
        batch = noises.shape[0]
        total = np.zeros(batch)
        # Only the newest node per level can be active again: cache one per level.
        for level in range(u.bit_length() - 1, -1, -1):
            if not u >> level & 1:
                continue
            index = (u >> level) - 1
            cached = self._nodes.get(level)
            if cached is None or cached[0] != index:
                cached = (index, rng.laplace(0.0, self.scale, size=batch))
                self._nodes[level] = cached
            total += cached[1]
        return total


def zero_noise() -> ZeroNoise:
    return ZeroNoise()


def fresh_noise(scale: float) -> FreshNoise:
    return FreshNoise(scale)


def tree_counter_noise(eps_prime: float, k: float) -> TreeCounterNoise:
    return TreeCounterNoise(eps_prime, k)


def make_noise(kind: str, *, scale: float = 1.0, eps_prime: float = 1.0, k: float = 1.0) -> NoiseProcess:
    if kind == "none":
        return ZeroNoise()
    if kind == "fresh":
        return FreshNoise(scale)
    if kind == "tree":
        return TreeCounterNoise(eps_prime, k)
    raise ValueError(f"unknown noise kind {kind!r}")


# ---------------------------------------------------------------------------
# Single step


@dataclass(frozen=True)
class NoisyMarketState:
    t: int
    q: float
    eta: float

    @property
    def qprime(self) -> float:
        return self.q + self.eta


def _payment(C: CostFunction, qprime, x, fee: float):
    cost = np.asarray(C.cost(qprime + x), dtype=float) - np.asarray(C.cost(qprime), dtype=float)
    return np.where(x != 0.0, cost + fee, 0.0)


def _check_trade(x, k: float) -> None:
    if np.any(np.abs(x) > k) or not np.all(np.isfinite(x)):
        raise ValueError(f"trade exceeds the cap k={k!r}")


def round_to_unit(x, unit: float):
    """Round trades toward zero onto multiples of ``unit``."""
    if unit <= 0.0:
        return x
    return np.trunc(np.asarray(x, dtype=float) / unit) * unit


def noisy_market_step(
    state: NoisyMarketState,
    x: float,
    C: CostFunction,
    k: float,
    noise: NoiseProcess,
    fee: float = 0.0,
    rng=None,
    trades=(),
    noises=None,
) -> tuple[float, NoisyMarketState]:
    """Execute trade ``x`` at ``state`` and draw the next noise.

    ``trades`` holds ``x_1 .. x_{t-1}`` and ``noises`` ``eta_1 .. eta_t``
    (defaults to ``(state.eta,)``); the current trade is not forwarded to
    the noise process.
    """
    _check_trade(x, k)
    rng = as_generator(rng)
    payment = float(_payment(C, state.qprime, x, fee))
    past_x = np.asarray(trades, dtype=float).reshape(1, -1)
    past_eta = np.asarray((state.eta,) if noises is None else noises, dtype=float).reshape(1, -1)
    eta_next = float(noise.next_noise(state.t, _readonly(past_x), _readonly(past_eta), rng)[0])
    return payment, NoisyMarketState(state.t + 1, state.q + x, eta_next)


# ---------------------------------------------------------------------------
# Ledgers


LEDGER_COLUMNS = ("t", "x", "q", "eta", "qprime", "payment")


@dataclass(frozen=True)
class TradeLedger:
    """Per-round record of one market; ``final_*`` describe round ``T + 1``."""

    x: np.ndarray
    q: np.ndarray
    eta: np.ndarray
    payment: np.ndarray
    final_state: float
    final_eta: float

    @property
    def T(self) -> int:
        return len(self.x)

    @property
    def t(self) -> np.ndarray:
        return np.arange(1, self.T + 1)

    @property
    def qprime(self) -> np.ndarray:
        return self.q + self.eta

    @property
    def final_qprime(self) -> float:
        return self.final_state + self.final_eta

    def state_after(self, horizon: int) -> float:
        """``q_{horizon + 1}``."""
        return self.final_state if horizon >= self.T else float(self.q[horizon])

    def to_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            write_ledger_csv(self, fh)


def write_ledger_csv(ledger: TradeLedger, fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(LEDGER_COLUMNS)
    for row in zip(ledger.t, ledger.x, ledger.q, ledger.eta, ledger.qprime, ledger.payment):
        writer.writerow([int(row[0])] + [repr(float(v)) for v in row[1:]])


@dataclass(frozen=True)
class LedgerBatch:
    """Ledgers of ``trials`` independent markets stacked along axis 0."""

    x: np.ndarray
    q: np.ndarray
    eta: np.ndarray
    payment: np.ndarray
    final_state: np.ndarray
    final_eta: np.ndarray

    @property
    def trials(self) -> int:
        return self.x.shape[0]

    @property
    def T(self) -> int:
        return self.x.shape[1]

    @property
    def qprime(self) -> np.ndarray:
        return self.q + self.eta

    @property
    def final_qprime(self) -> np.ndarray:
        return self.final_state + self.final_eta

    def trace(self, i: int) -> TradeLedger:
        return TradeLedger(
            self.x[i], self.q[i], self.eta[i], self.payment[i],
            float(self.final_state[i]), float(self.final_eta[i]),
        )

    def __iter__(self):
        return (self.trace(i) for i in range(self.trials))

    def state_after(self, horizon: int) -> np.ndarray:
        return self.final_state if horizon >= self.T else self.q[:, horizon]


def maker_loss(ledger: TradeLedger | LedgerBatch, omega, horizon: int | None = None):
    """Market maker's loss ``q_{T+1} 1(omega=1) - sum of payments`` (fees included).

    ``horizon`` truncates to the first ``horizon`` rounds; a prefix of a
    longer run is itself a valid run since strategies and noise never see
    the horizon. ``omega`` may be a per-trace vector for a batch.
    """
    T = ledger.T if horizon is None else horizon
    if not 0 <= T <= ledger.T:
        raise ValueError("horizon outside the recorded rounds")
    final = ledger.state_after(T)
    omega = np.asarray(omega)
    if not np.all((omega == 0) | (omega == 1)):
        raise ValueError("omega must be 0 or 1")
    if isinstance(ledger, TradeLedger):
        return float(final * omega) - math.fsum(ledger.payment[:T])
    return final * omega - ledger.payment[:, :T].sum(axis=1)


# ---------------------------------------------------------------------------
# Simulation


class Strategy(Protocol):
    descriptor: str

    def decide(self, trades: np.ndarray, noisy_states: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Trade for round ``t`` given ``x_1..x_{t-1}`` and ``q'_1..q'_t``, batched on axis 0."""
        ...


def simulate(
    strategy: Strategy,
    noise: NoiseProcess,
    C: CostFunction,
    k: float,
    T: int,
    fee: float = 0.0,
    min_unit: float = 0.0,
    rng=None,
    trials: int | None = None,
) -> TradeLedger | LedgerBatch:
    """Run the noisy market against ``strategy`` for ``T`` rounds.

    Returns a :class:`TradeLedger`, or a :class:`LedgerBatch` when
    ``trials`` is given. Noise and strategy draw from separate child
    streams of ``rng``, so two runs with the same seed see identical noise
    whatever the strategy does.
    """
    if T < 1:
        raise ValueError("T must be at least 1")
    if not k > 0.0:
        raise ValueError("k must be positive")
    if fee < 0.0 or min_unit < 0.0:
        raise ValueError("fee and min_unit must be non-negative")
    batch = 1 if trials is None else int(trials)
    if batch < 1:
        raise ValueError("trials must be at least 1")
    noise_rng, strategy_rng = as_generator(rng).spawn(2)
    noise.reset()

    x = np.zeros((batch, T))
    q = np.zeros((batch, T + 1))
    eta = np.zeros((batch, T + 1))
    qprime = np.zeros((batch, T + 1))
    payment = np.zeros((batch, T))

    eta[:, 0] = noise.next_noise(0, _readonly(x[:, :0]), _readonly(eta[:, :0]), noise_rng)
    qprime[:, 0] = eta[:, 0]
    for t in range(1, T + 1):
        i = t - 1
        xt = np.asarray(strategy.decide(_readonly(x[:, :i]), _readonly(qprime[:, :t]), strategy_rng), dtype=float)
        xt = np.broadcast_to(xt, (batch,))
        _check_trade(xt, k)
        xt = round_to_unit(xt, min_unit)
        payment[:, i] = _payment(C, qprime[:, i], xt, fee)
        x[:, i] = xt
        q[:, t] = q[:, i] + xt
        eta[:, t] = noise.next_noise(t, _readonly(x[:, :i]), _readonly(eta[:, :t]), noise_rng)
        qprime[:, t] = q[:, t] + eta[:, t]

    ledgers = LedgerBatch(x, q[:, :T], eta[:, :T], payment, q[:, T].copy(), eta[:, T].copy())
    return ledgers.trace(0) if trials is None else ledgers

