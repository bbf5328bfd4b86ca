"""Per-example clipping, aggregation and Gaussian noise.

Noise is drawn from a counter-based stream: element ``i`` at training step
``t`` under master seed ``s`` always gets the same standard normal, no
matter how the vector is chunked or in which order chunks are produced.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from anadp.errors import ConfigurationError, NumericError
from anadp.models import validate_group_map

NOISE_MODES = ("uniform", "anadp", "none")

_U64 = 2**64


@dataclass(frozen=True)
class ClipConfig:
    C: float = 10.0

    def __post_init__(self):
        if not (np.isfinite(self.C) and self.C > 0):
            raise ConfigurationError(f"clipping threshold must be finite and positive, got {self.C}")


@dataclass(frozen=True)
class NoiseSeed:
    master_seed: int
    step: int


@dataclass(frozen=True)
class NoisePlan:
    sigma0: float
    stddev: np.ndarray
    mode: str

    def __len__(self):
        return self.stddev.size

    def group_stddev(self, group_map: Sequence[tuple[str, int, int]]) -> list[tuple[str, float]]:
        """Precision-weighted stddev per group: ``mean(stddev**-2) ** -0.5``.

        Summing ``length / value**2`` over groups recovers the total
        precision of the plan. Groups without noise report 0.
        """
        validate_group_map(group_map, self.stddev.size)
        out = []
        for label, start, length in group_map:
            sd = self.stddev[start:start + length]
            if np.any(sd == 0):
                out.append((label, 0.0))
            else:
                out.append((label, float(np.mean(sd ** -2.0) ** -0.5)))
        return out


def clip_per_example(grads: np.ndarray, cfg: ClipConfig) -> np.ndarray:
    """Scale every row to L2 norm at most ``cfg.C``."""
    grads = np.asarray(grads, dtype=np.float64)
    bad = np.flatnonzero(~np.all(np.isfinite(grads), axis=1))
    if bad.size:
        raise NumericError(f"non-finite gradient for example {bad[0]}", index=int(bad[0]))
    norms = np.linalg.norm(grads, axis=1)
    scale = np.ones_like(norms)
    big = norms > cfg.C
    scale[big] = cfg.C / norms[big]
    return grads * scale[:, None]


def aggregate(clipped: np.ndarray) -> np.ndarray:
    """Mean over rows, summed in row order."""
    clipped = np.asarray(clipped, dtype=np.float64)
    if clipped.ndim != 2 or clipped.shape[0] == 0:
        raise ConfigurationError("aggregate needs a nonempty gradient matrix")
    total = np.zeros(clipped.shape[1])
    for row in clipped:
        total += row
    return total / clipped.shape[0]


def make_noise_plan(
    mode: str,
    sigma0: float,
    C: float,
    I_norm: Optional[np.ndarray] = None,
    *,
    size: Optional[int] = None,
    conservative: bool = False,
) -> NoisePlan:
    """Per-element noise stddev.

    ``uniform`` gives ``sigma0*C`` everywhere, ``anadp`` gives
    ``sigma0*C/sqrt(I_norm)``. With ``conservative`` no element falls below
    the uniform level.
    """
    if mode not in NOISE_MODES:
        raise ConfigurationError(f"unknown noise mode {mode!r}")
    if not (sigma0 >= 0 and np.isfinite(sigma0)):
        raise ConfigurationError("sigma0 must be finite and nonnegative")
    if mode == "anadp":
        if I_norm is None:
            raise ConfigurationError("anadp plan needs normalized importance")
        I_norm = np.asarray(I_norm, dtype=np.float64)
        if not np.all(I_norm > 0):
            raise ConfigurationError("normalized importance must be strictly positive")
        size = I_norm.size
    elif size is None:
        if I_norm is None:
            raise ConfigurationError("plan size unknown")
        size = np.asarray(I_norm).size
    base = sigma0 * C
    if mode == "none":
        return NoisePlan(sigma0, np.zeros(size), mode)
    if mode == "uniform":
        return NoisePlan(sigma0, np.full(size, base), mode)
    factor = 1.0 / np.sqrt(I_norm)
    if conservative:
        factor = np.maximum(1.0, factor)
    return NoisePlan(sigma0, base * factor, mode)


def standard_normals(seed: NoiseSeed, n: int, start: int = 0) -> np.ndarray:
    """Normals for elements ``start .. start+n-1`` of the (seed, step) stream.

    Philox is keyed on (master_seed, step); element i consumes raw words
    2i and 2i+1 and maps them through Box-Muller.
    """
    if start % 2:
        return standard_normals(seed, n + 1, start - 1)[1:]
    key = np.array([seed.master_seed % _U64, seed.step % _U64], dtype=np.uint64)
    bg = np.random.Philox(key=key)
    if start:
        bg.advance(start // 2)  # one counter block = 4 words = 2 elements
    words = bg.random_raw(2 * n).reshape(n, 2)
    u1 = ((words[:, 0] >> np.uint64(11)) + 1) * (1.0 / 2**53)  # (0, 1]
    u2 = (words[:, 1] >> np.uint64(11)) * (1.0 / 2**53)  # [0, 1)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def add_noise(aggregated: np.ndarray, plan: NoisePlan, batch_size: int, seed: NoiseSeed) -> np.ndarray:
    """``aggregated + stddev * z / batch_size`` with counter-keyed ``z``."""
    aggregated = np.asarray(aggregated, dtype=np.float64)
    if aggregated.shape != plan.stddev.shape:
        raise ConfigurationError(f"plan length {len(plan)} does not match gradient length {aggregated.size}")
    if plan.mode == "none":
        return aggregated.copy()
    z = standard_normals(seed, aggregated.size)
    return aggregated + plan.stddev * z / batch_size
