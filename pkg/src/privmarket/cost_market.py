"""Cost-function market makers for a single binary security.

A trade of ``x`` shares at state ``q`` costs ``C(q + x) - C(q)``; the
instantaneous price is ``C'(q)``. The log market scoring rule (LMSR) is
``C(q) = b * log(exp((q + a)/b) + 1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


def _check_liquidity(b: float) -> None:
    if not b > 0.0:
        raise ValueError(f"liquidity b must be positive, got {b!r}")


def _maybe_scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def _softplus(z: np.ndarray) -> np.ndarray:
    # log(exp(z) + 1) without overflow, and without losing the tail for z << 0.
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def lmsr_cost(q, b: float = 100.0, a: float = 0.0):
    _check_liquidity(b)
    z = (np.asarray(q, dtype=float) + a) / b
    return _maybe_scalar(b * _softplus(z))


def lmsr_price(q, b: float = 100.0, a: float = 0.0):
    _check_liquidity(b)
    z = (np.asarray(q, dtype=float) + a) / b
    return _maybe_scalar(np.exp(-np.logaddexp(0.0, -z)))


class CostFunction:
    """Convex potential with an analytic derivative.

    Subclasses supply ``cost`` and ``price``; everything else derives from them.
    """

    def cost(self, q):
        raise NotImplementedError

    def price(self, q):
        raise NotImplementedError

    def trade_cost(self, q, x):
        return trade_cost(self, q, x)

    def bregman(self, p, q):
        return bregman(self, p, q)


@dataclass(frozen=True)
class LMSR(CostFunction):
    b: float = 100.0
    a: float = 0.0

    def __post_init__(self):
        _check_liquidity(self.b)

    def cost(self, q):
        return lmsr_cost(q, self.b, self.a)

    def price(self, q):
        return lmsr_price(q, self.b, self.a)

    @property
    def worst_case_loss(self) -> float:
        """Sup of the maker's loss over trades and outcomes; ``b log 2`` when ``a = 0``."""
        return self.b * math.log1p(math.exp(abs(self.a) / self.b))


def trade_cost(C: CostFunction, q, x):
    """Payment for buying ``x`` shares (selling if negative) at state ``q``."""
    q = np.asarray(q, dtype=float)
    return _maybe_scalar(C.cost(q + x) - C.cost(q))


def bregman(C: CostFunction, p, q):
    """``C(p) - C(q) - C'(q)(p - q)``, clipped at zero against rounding."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    d = C.cost(p) - C.cost(q) - C.price(q) * (p - q)
    return _maybe_scalar(np.maximum(d, 0.0))


def chi(C: CostFunction, target: float, gamma: float) -> float:
    """Smaller of the two divergences at distance ``gamma`` from ``target``."""
    if not gamma > 0.0:
        raise ValueError("gamma must be positive")
    value = min(bregman(C, target + gamma, target), bregman(C, target - gamma, target))
    if not value > 0.0:
        raise ValueError(f"cost function is linear around {target!r}; chi = {value!r}")
    return float(value)


@dataclass(frozen=True)
class MarketLedger:
    """Trades ``x_t``, pre-trade states ``q_t`` and payments of a noiseless market."""

    trades: np.ndarray
    states: np.ndarray
    payments: np.ndarray
    final_state: float

    @property
    def rounds(self) -> list[tuple[float, float, float]]:
        return list(zip(self.trades.tolist(), self.states.tolist(), self.payments.tolist()))


def standard_market_loss(C: CostFunction, final_state: float, omega: int) -> float:
    """``q_{T+1} 1(omega = 1) - (C(q_{T+1}) - C(0))``."""
    return final_state * (omega == 1) - (C.cost(final_state) - C.cost(0.0))


def run_standard_market(trades: Sequence[float], C: CostFunction, omega: int) -> tuple[MarketLedger, float]:
    """Run the noiseless market maker over ``trades`` and settle on ``omega``."""
    if omega not in (0, 1):
        raise ValueError("omega must be 0 or 1")
    x = np.asarray(trades, dtype=float).reshape(-1)
    if not np.all(np.isfinite(x)):
        raise ValueError("trades must be finite")
    states = np.concatenate(([0.0], np.cumsum(x)))
    pre = states[:-1]
    payments = np.asarray(C.cost(states[1:]), dtype=float) - np.asarray(C.cost(pre), dtype=float)
    final = float(states[-1])
    ledger = MarketLedger(x, pre, np.atleast_1d(payments), final)
    return ledger, standard_market_loss(C, final, omega)
