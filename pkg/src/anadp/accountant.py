"""Renyi-DP accounting for the Poisson-subsampled Gaussian mechanism.

Increments use the binomial expansion of ``A_alpha = E_{z~N(0,s^2)}[
((1-q) + q*exp((2z-1)/(2s^2)))^alpha ]``: a finite sum for integer orders
and the two-sided erfc series for fractional ones, all summed in log
space. Conversion to (eps, delta) uses ``rdp + log(1/delta)/(alpha-1)``.
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import special

from anadp.errors import ConfigurationError, InfeasibleTargetError

log = logging.getLogger(__name__)

ORDERS = tuple(float(a) for a in np.concatenate([np.arange(1.25, 64.0 + 1e-9, 0.25), np.arange(65, 257)]))

SIGMA_BRACKET = (0.3, 100.0)

_CHUNK = 4096
_MAX_TERMS = 2_000_000
_LOG_CUTOFF = -30.0


@dataclass(frozen=True)
class PrivacySpec:
    epsilon: float
    delta: float
    sampling_rate: float
    steps: int

    def __post_init__(self):
        if not (np.isfinite(self.epsilon) and self.epsilon > 0):
            raise ConfigurationError("epsilon must be finite and positive")
        if not (0.0 < self.delta < 1.0):
            raise ConfigurationError("delta must lie in (0, 1)")
        if not (0.0 < self.sampling_rate <= 1.0):
            raise ConfigurationError("sampling rate must lie in (0, 1]")
        if self.steps < 0:
            raise ConfigurationError("steps must be nonnegative")


def _log_a_int(q: float, sigma: float, alpha: int) -> float:
    i = np.arange(alpha + 1, dtype=np.float64)
    terms = (
        special.gammaln(alpha + 1) - special.gammaln(i + 1) - special.gammaln(alpha - i + 1)
        + i * math.log(q) + (alpha - i) * math.log1p(-q)
        + (i * i - i) / (2.0 * sigma**2)
    )
    return float(special.logsumexp(terms))


def _log_erfc(x: np.ndarray) -> np.ndarray:
    return math.log(2.0) + special.log_ndtr(-x * math.sqrt(2.0))


def _log_a_frac(q: float, sigma: float, alpha: float) -> float:
    z0 = sigma**2 * math.log(1.0 / q - 1.0) + 0.5
    logq, log1mq = math.log(q), math.log1p(-q)
    logs, signs = [], []
    start = 0
    while start < _MAX_TERMS:
        i = np.arange(start, start + _CHUNK, dtype=np.float64)
        j = alpha - i
        coef = special.binom(alpha, i)
        log_coef = np.log(np.abs(coef))
        sign = np.sign(coef)
        s0 = (log_coef + i * logq + j * log1mq + (i * i - i) / (2.0 * sigma**2)
              + math.log(0.5) + _log_erfc((i - z0) / (math.sqrt(2.0) * sigma)))
        s1 = (log_coef + j * logq + i * log1mq + (j * j - j) / (2.0 * sigma**2)
              + math.log(0.5) + _log_erfc((z0 - j) / (math.sqrt(2.0) * sigma)))
        logs += [s0, s1]
        signs += [sign, sign]
        tail = np.maximum(s0[-64:], s1[-64:])
        if start + _CHUNK > alpha + 1 and np.all(tail < _LOG_CUTOFF) and np.all(np.diff(tail) < 0):
            break
        start += _CHUNK
    val, sgn = special.logsumexp(np.concatenate(logs), b=np.concatenate(signs), return_sign=True)
    if sgn <= 0:
        raise ArithmeticError(f"log-A series did not converge for alpha={alpha}")
    return float(val)


@functools.lru_cache(maxsize=4096)
def _rdp_cached(sigma: float, q: float, orders: tuple[float, ...]) -> tuple[float, ...]:
    out = []
    for a in orders:
        if q == 1.0:
            out.append(a / (2.0 * sigma**2))
        elif float(a).is_integer():
            out.append(_log_a_int(q, sigma, int(a)) / (a - 1.0))
        else:
            out.append(_log_a_frac(q, sigma, a) / (a - 1.0))
    return tuple(max(v, 0.0) for v in out)


def rdp_step(sigma: float, q: float, orders=ORDERS) -> np.ndarray:
    """RDP of one subsampled-Gaussian step, one value per order."""
    if not (sigma > 0 and np.isfinite(sigma)):
        raise ConfigurationError(f"noise multiplier must be positive, got {sigma}")
    if not (0.0 < q <= 1.0):
        raise ConfigurationError(f"sampling rate must lie in (0, 1], got {q}")
    return np.array(_rdp_cached(float(sigma), float(q), tuple(float(a) for a in orders)))


class EpsilonResult(NamedTuple):
    epsilon: float
    best_order: float


@dataclass
class AccountantState:
    """Composed privacy loss.

    Steps are tallied per distinct (sigma, q); ``rdp`` multiplies each
    tally by its increment so T identical steps cost exactly T increments.
    """

    orders: tuple[float, ...] = ORDERS
    counts: dict[tuple[float, float], int] = field(default_factory=dict)

    def compose(self, sigma: float, q: float, steps: int = 1) -> "AccountantState":
        rdp_step(sigma, q, self.orders)  # validate now, not at read time
        key = (float(sigma), float(q))
        self.counts[key] = self.counts.get(key, 0) + steps
        return self

    @property
    def steps_taken(self) -> int:
        return sum(self.counts.values())

    @property
    def rdp(self) -> np.ndarray:
        total = np.zeros(len(self.orders))
        for (sigma, q), n in sorted(self.counts.items()):
            total += n * rdp_step(sigma, q, self.orders)
        return total


def to_epsilon(state: AccountantState, delta: float) -> EpsilonResult:
    """Best (eps, order) over the grid.

    With no steps the privacy loss is the limit 0, approached as the order
    grows without bound; that is reported as ``(0.0, inf)``.
    """
    if not (0.0 < delta < 1.0):
        raise ConfigurationError("delta must lie in (0, 1)")
    if state.steps_taken == 0:
        return EpsilonResult(0.0, math.inf)
    orders = np.asarray(state.orders)
    eps = state.rdp + math.log(1.0 / delta) / (orders - 1.0)
    k = int(np.argmin(eps))
    return EpsilonResult(float(max(eps[k], 0.0)), float(orders[k]))


def epsilon_for(sigma: float, q: float, steps: int, delta: float, orders=ORDERS) -> float:
    state = AccountantState(tuple(orders))
    if steps:
        state.compose(sigma, q, steps)
    return to_epsilon(state, delta).epsilon


def calibrate_sigma(target: PrivacySpec, bracket=SIGMA_BRACKET, tol: float = 1e-3, orders=ORDERS) -> float:
    """Smallest-found sigma whose epsilon lies in ``[target - tol, target]``."""
    lo, hi = bracket
    if target.steps == 0:
        return lo

    def eps(s):
        return epsilon_for(s, target.sampling_rate, target.steps, target.delta, orders)

    if eps(hi) > target.epsilon:
        raise InfeasibleTargetError(
            f"epsilon={target.epsilon} unreachable with sigma in [{lo}, {hi}] "
            f"(q={target.sampling_rate}, T={target.steps}, delta={target.delta})")
    e_lo = eps(lo)
    if e_lo <= target.epsilon:
        log.warning("sigma=%g already gives epsilon=%.4g below target %g; bracket floor used", lo, e_lo, target.epsilon)
        return lo
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if eps(mid) > target.epsilon:
            lo = mid
        else:
            hi = mid
        if target.epsilon - eps(hi) <= tol or hi - lo < 1e-12:
            break
    return hi
