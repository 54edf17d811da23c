"""
Closed-form success probabilities for brute-force and LPC mistraining, and the
Chernoff-bounded estimate of the search space behind an observed success rate.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction

from scipy.special import xlogy

logger = logging.getLogger(__name__)

DIAGNOSTIC_SPREAD = 2


class DomainError(ValueError):
    """Arguments outside the domain of a closed form."""


def _check_depth(i: int, T: int):
    if T < 1 or not 1 <= i <= T:
        raise DomainError(f"Component depth {i} outside 1..{T}")


def alloc_prob(i: int, T: int) -> Fraction:
    """Probability a misprediction at the base allocates into component ``i``."""
    _check_depth(i, T)
    return Fraction(1 << (T - i), (1 << T) - 1)


def p_prime(i: int, T: int) -> Fraction:
    """Probability a base allocation lands strictly above component ``i``."""
    _check_depth(i, T)
    return Fraction((1 << (T - i)) - 1, (1 << T) - 1)


def p_succ(p, i: int, T: int):
    """Brute-force success probability for a victim provided by component ``i``."""
    _check_depth(i, T)
    if not 0 <= p <= 1:
        raise DomainError(f"Alias probability {p} outside [0, 1]")
    if i == T:
        return p
    return p * p + (1 - p) * p_prime(i, T) * p


def lpc_gain(p, i: int, T: int) -> float:
    """Expected ratio of LPC to brute-force success rates."""
    return float(p / p_succ(p, i, T))


@dataclass(frozen=True)
class ModelParams:
    p: Fraction
    tables: int
    depth: int

    def __post_init__(self):
        _check_depth(self.depth, self.tables)
        if not 0 < self.p < 1:
            raise DomainError(f"Alias probability {self.p} outside (0, 1)")

    @property
    def brute_force_rate(self):
        return p_succ(self.p, self.depth, self.tables)

    @property
    def lpc_rate(self):
        return self.p


def chernoff_log_bound(n: int, k: int, exponent: int) -> float:
    """
    Natural log of the Chernoff tail bound on observing ``k`` successes in ``n``
    trials when the true rate is ``2**-exponent``.
    """
    mu = n / 2.0**exponent
    if k == 0:
        return -mu
    return float((k - mu) - xlogy(k, k / mu))


@dataclass(frozen=True)
class EstimateResult:
    trials: int
    successes: int
    exponent: int
    chernoff_log_bound: float
    lower_bound_only: bool = False
    diagnostics: dict[int, float] = field(default_factory=dict)

    @property
    def success_rate(self) -> float:
        return self.successes / self.trials

    def __str__(self):
        bound = ">=" if self.lower_bound_only else "~"
        return f"search space {bound} 2^{self.exponent} ({self.successes}/{self.trials})"


def estimate_search_space(n: int, k: int) -> EstimateResult:
    """Nearest power-of-two search space for ``k`` successes in ``n`` trials."""
    if n < 1:
        raise DomainError("At least one trial is required")
    if not 0 <= k <= n:
        raise DomainError(f"Successes {k} outside 0..{n}")
    if k == 0:
        exponent = math.ceil(math.log2(n))
        logger.warning(f"No successes in {n} trials: reporting a lower bound of 2^{exponent}")
        return EstimateResult(n, 0, exponent, chernoff_log_bound(n, 0, exponent), lower_bound_only=True)
    exponent = round(math.log2(n / k))
    diagnostics = {
        e: chernoff_log_bound(n, k, e)
        for e in range(exponent - DIAGNOSTIC_SPREAD, exponent + DIAGNOSTIC_SPREAD + 1)
        if e != exponent
    }
    return EstimateResult(n, k, exponent, chernoff_log_bound(n, k, exponent), diagnostics=diagnostics)
