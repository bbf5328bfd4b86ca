"""Per-parameter importance scores that steer the adaptive noise.

Sensitivity is ``|grad * weight|``. Its exponential moving average and the
moving absolute deviation around that average (the uncertainty) multiply
into a raw importance score. ``normalize`` turns raw scores into positive
weights with mean exactly one, which later divide the noise variance.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple, Sequence

import numpy as np

from anadp.errors import ConfigurationError, NumericError
from anadp.models import ParameterVector, validate_group_map

MAX_CLAMP_ROUNDS = 8


@dataclass(frozen=True)
class ImportanceConfig:
    beta1: float = 0.85
    beta2: float = 0.85
    alpha: float = 0.3
    q_hi: float = 0.75
    q_lo: float = 0.25
    floor: float = 0.1
    iqr_epsilon: float = 1e-12

    def __post_init__(self):
        for name in ("beta1", "beta2", "alpha"):
            v = getattr(self, name)
            if not (np.isfinite(v) and 0.0 <= v <= 1.0):
                raise ConfigurationError(f"{name} must lie in [0, 1], got {v}")
        if not (0.0 < self.q_lo < self.q_hi < 1.0):
            raise ConfigurationError("need 0 < q_lo < q_hi < 1")
        if not (0.0 < self.floor < 1.0):
            raise ConfigurationError("floor must lie in (0, 1)")
        if not (np.isfinite(self.iqr_epsilon) and self.iqr_epsilon > 0):
            raise ConfigurationError("iqr_epsilon must be positive")


@dataclass(frozen=True)
class ImportanceState:
    S: np.ndarray
    U: np.ndarray
    I: np.ndarray
    I_norm: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, n: int) -> "ImportanceState":
        z = np.zeros(n)
        return cls(S=z, U=z.copy(), I=z.copy(), I_norm=np.ones(n), step=0)

    def __len__(self):
        return self.S.size


def instantaneous_sensitivity(grad: np.ndarray, params: ParameterVector | np.ndarray) -> np.ndarray:
    w = params.values if isinstance(params, ParameterVector) else np.asarray(params, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != w.shape:
        raise ConfigurationError(f"gradient length {grad.size} does not match {w.size} parameters")
    return np.abs(grad * w)


def update_moving_averages(state: ImportanceState, s_inst: np.ndarray, cfg: ImportanceConfig) -> ImportanceState:
    """One EMA step. The uncertainty term uses the freshly updated average."""
    s_inst = np.asarray(s_inst, dtype=np.float64)
    if s_inst.shape != state.S.shape:
        raise ConfigurationError(f"sensitivity length {s_inst.size} does not match state length {state.S.size}")
    S = cfg.beta1 * state.S + (1.0 - cfg.beta1) * s_inst
    U = cfg.beta2 * state.U + (1.0 - cfg.beta2) * np.abs(S - s_inst)
    return replace(state, S=S, U=U, I=S * U, step=state.step + 1)


def normalize(I: np.ndarray, cfg: ImportanceConfig) -> np.ndarray:
    """Robust-scale, smooth and center raw importance at mean one.

    Entries that would fall below ``cfg.floor`` are clamped there and the
    remaining entries are shifted down uniformly to restore the mean. If
    that does not settle within a few rounds the result is all ones.
    """
    I = np.asarray(I, dtype=np.float64)
    if I.ndim != 1 or I.size < 4:
        raise ConfigurationError("importance vector needs at least 4 entries")
    bad = np.flatnonzero(~np.isfinite(I))
    if bad.size:
        raise NumericError(f"non-finite importance at index {bad[0]}", index=int(bad[0]))
    n = I.size
    ones = np.ones(n)
    if cfg.alpha == 1.0:
        return ones

    hi, med, lo = np.quantile(I, [cfg.q_hi, 0.5, cfg.q_lo])
    spread = hi - lo
    # relative test keeps normalize(c * I) == normalize(I) for tiny scores
    if not spread > cfg.iqr_epsilon * np.abs(I).max():
        return ones
    scaled = (I - med) / spread
    mu = scaled.mean()
    smoothed = (1.0 - cfg.alpha) * scaled + cfg.alpha * mu
    out = smoothed - (smoothed.mean() - 1.0)

    free = np.ones(n, dtype=bool)
    for _ in range(MAX_CLAMP_ROUNDS):
        low = free & (out < cfg.floor)
        if not low.any():
            break
        out[low] = cfg.floor
        free &= ~low
        if not free.any():
            return ones
        out[free] -= (out.sum() - n) / free.sum()
    if out.min() < cfg.floor:
        return ones
    # second pass absorbs rounding left by the first shift
    out[free] -= (out.sum() - n) / free.sum()
    if out.min() < cfg.floor:
        return ones
    return out


class GroupSummary(NamedTuple):
    group: str
    mean_importance: float
    noise_multiplier: float


def group_summary(I_norm: np.ndarray, group_map: Sequence[tuple[str, int, int]]) -> list[GroupSummary]:
    """Per-group mean importance and its effective noise multiplier.

    The multiplier is ``1/sqrt(mean importance)``: the single per-group
    factor whose precision, summed over the group's elements, equals the
    elementwise precisions ``sum(I_norm)``.
    """
    I_norm = np.asarray(I_norm, dtype=np.float64)
    validate_group_map(group_map, I_norm.size)
    out = []
    for label, start, length in group_map:
        m = float(I_norm[start:start + length].mean())
        out.append(GroupSummary(label, m, 1.0 / np.sqrt(m)))
    return out
