"""Bounded proper scoring rules for binary events.

Every rule here maps a report ``p`` in [0, 1] and an outcome ``omega`` in
{0, 1} to a score in [0, 1]; higher is better.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


def _check_report(p) -> None:
    arr = np.asarray(p, dtype=float)
    if not np.all((arr >= 0.0) & (arr <= 1.0)):
        raise ValueError(f"report must lie in [0, 1], got {p!r}")


def _check_outcome(omega) -> None:
    arr = np.asarray(omega)
    if not np.all((arr == 0) | (arr == 1)):
        raise ValueError(f"outcome must be 0 or 1, got {omega!r}")


@dataclass(frozen=True)
class ScoringRule:
    """A scoring rule with range [0, 1].

    ``fn`` must accept numpy arrays and broadcast.
    """

    name: str
    fn: Callable[[np.ndarray, np.ndarray], np.ndarray]

    def evaluate(self, p, omega):
        _check_report(p)
        _check_outcome(omega)
        out = self.fn(np.asarray(p, dtype=float), np.asarray(omega, dtype=float))
        return float(out) if np.ndim(out) == 0 else out

    __call__ = evaluate

    def scaled(self, factor: float) -> "ScoringRule":
        """The rule ``factor * s``; stays in [0, 1] for ``factor`` in [0, 1]."""
        if not 0.0 <= factor <= 1.0:
            raise ValueError("scale factor must lie in [0, 1]")
        fn = self.fn
        return ScoringRule(f"{factor!r}*{self.name}", lambda p, w: factor * fn(p, w))


def _brier(p, omega):
    return 1.0 - (p - omega) ** 2


BRIER = ScoringRule("brier", _brier)


def brier_score(p, omega):
    """Quadratic score ``1 - (p - omega)**2``."""
    return BRIER.evaluate(p, omega)


def expected_score(rule: ScoringRule, report, belief):
    """Expected score of ``report`` when ``omega ~ Bernoulli(belief)``."""
    _check_report(belief)
    belief = np.asarray(belief, dtype=float)
    out = belief * rule.evaluate(report, 1) + (1.0 - belief) * rule.evaluate(report, 0)
    return float(out) if np.ndim(out) == 0 else out
