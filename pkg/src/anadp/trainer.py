"""Training loop: plain SGD, uniform DP-SGD, and importance-weighted noise.

One step runs: per-example gradients, importance update from the mean raw
gradient, normalization, noise plan, clipping, averaging, noise, SGD.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import asdict, dataclass, field, replace
from typing import NamedTuple, Optional

import numpy as np
from scipy import stats

from anadp.accountant import AccountantState, PrivacySpec, calibrate_sigma, to_epsilon
from anadp.errors import ConfigurationError, NumericError
from anadp.importance import (
    ImportanceConfig,
    ImportanceState,
    instantaneous_sensitivity,
    normalize,
    update_moving_averages,
)
from anadp.mechanism import ClipConfig, NoisePlan, NoiseSeed, add_noise, aggregate, clip_per_example, make_noise_plan
from anadp.models import Batch, ModelSpec, ParameterVector, init_params, loss_and_per_example_gradients, predict, sgd_update

TRAIN_MODES = ("non_private", "dp_uniform", "anadp")
_PLAN_MODE = {"non_private": "none", "dp_uniform": "uniform", "anadp": "anadp"}
MEAN_TOL = 1e-9


@dataclass(frozen=True)
class TrainConfig:
    model: ModelSpec
    mode: str = "anadp"
    lr: float = 0.1
    epochs: int = 5
    batch_size: int = 64
    seed: int = 0
    clip: ClipConfig = field(default_factory=ClipConfig)
    importance: ImportanceConfig = field(default_factory=ImportanceConfig)
    epsilon: Optional[float] = 8.0
    delta: float = 1e-5
    sigma0: Optional[float] = None  # skips calibration when set
    eval_every: int = 50
    log_every: int = 10
    importance_from_noisy: bool = False
    conservative: bool = False

    def __post_init__(self):
        if self.mode not in TRAIN_MODES:
            raise ConfigurationError(f"unknown mode {self.mode!r}; expected one of {TRAIN_MODES}")
        if not self.lr > 0:
            raise ConfigurationError("learning rate must be positive")
        if self.epochs < 0 or self.batch_size < 1 or self.eval_every < 1 or self.log_every < 1:
            raise ConfigurationError("epochs >= 0, batch_size, eval_every and log_every >= 1 required")
        if self.mode != "non_private" and self.sigma0 is None and self.epsilon is None:
            raise ConfigurationError("private modes need epsilon or an explicit sigma0")
        if self.sigma0 is not None and not (self.sigma0 >= 0 and math.isfinite(self.sigma0)):
            raise ConfigurationError("sigma0 must be finite and nonnegative")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class TrainState:
    params: ParameterVector
    importance: ImportanceState
    accountant: AccountantState
    sigma0: float
    sampling_rate: float
    step: int = 0
    loss: float = math.nan
    plan: Optional[NoisePlan] = None


class StepRecord(NamedTuple):
    step: int
    loss: float
    epsilon: float


class EvalRecord(NamedTuple):
    step: int
    accuracy: float


class NoiseRecord(NamedTuple):
    step: int
    group: str
    mean_importance: float
    stddev: float


@dataclass
class RunRecord:
    config: dict
    sigma0: float
    steps: list[StepRecord] = field(default_factory=list)
    evals: list[EvalRecord] = field(default_factory=list)
    noise: list[NoiseRecord] = field(default_factory=list)
    final_epsilon: float = 0.0
    params_digest: str = ""
    final_params: Optional[ParameterVector] = field(default=None, repr=False, compare=False)

    @property
    def best_accuracy(self) -> float:
        return max(e.accuracy for e in self.evals) if self.evals else math.nan

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "sigma0": self.sigma0,
            "final_epsilon": self.final_epsilon,
            "best_accuracy": self.best_accuracy,
            "params_digest": self.params_digest,
            "steps": [r._asdict() for r in self.steps],
            "evals": [r._asdict() for r in self.evals],
            "noise": [r._asdict() for r in self.noise],
        }


def params_digest(params: ParameterVector) -> str:
    return hashlib.sha256(np.ascontiguousarray(params.values).tobytes()).hexdigest()


def init_state(cfg: TrainConfig, sigma0: float, sampling_rate: float) -> TrainState:
    params = init_params(cfg.model, cfg.seed)
    return TrainState(
        params=params,
        importance=ImportanceState.zeros(len(params)),
        accountant=AccountantState(),
        sigma0=sigma0,
        sampling_rate=sampling_rate,
    )


def _refresh_importance(state: ImportanceState, grad: np.ndarray, params: ParameterVector, cfg: ImportanceConfig):
    s = instantaneous_sensitivity(grad, params)
    state = update_moving_averages(state, s, cfg)
    I_norm = normalize(state.I, cfg)
    if abs(I_norm.mean() - 1.0) > MEAN_TOL or I_norm.min() < cfg.floor:
        raise NumericError(f"normalized importance off its mean-one budget at step {state.step}", index=state.step)
    return replace(state, I_norm=I_norm)


def train_step(state: TrainState, batch: Batch, cfg: TrainConfig) -> TrainState:
    """Advance one optimizer step; returns the new state."""
    step = state.step + 1
    losses, grads = loss_and_per_example_gradients(cfg.model, state.params, batch)
    imp = state.importance
    if cfg.mode == "anadp" and not cfg.importance_from_noisy:
        imp = _refresh_importance(imp, aggregate(grads), state.params, cfg.importance)

    plan = make_noise_plan(
        _PLAN_MODE[cfg.mode], state.sigma0, cfg.clip.C, imp.I_norm,
        size=len(state.params), conservative=cfg.conservative,
    )
    if cfg.mode != "non_private":
        grads = clip_per_example(grads, cfg.clip)
    noisy = add_noise(aggregate(grads), plan, batch.size, NoiseSeed(cfg.seed, step))
    if cfg.mode == "anadp" and cfg.importance_from_noisy:
        # feeds the next step's plan; this step used the previous weights
        imp = _refresh_importance(imp, noisy, state.params, cfg.importance)

    new_values = state.params.values - cfg.lr * noisy
    bad = np.flatnonzero(~np.isfinite(new_values))
    if bad.size:
        raise NumericError(f"non-finite parameter {bad[0]} after step {step}", index=step)
    params = sgd_update(state.params, noisy, cfg.lr)

    accountant = state.accountant
    if cfg.mode != "non_private" and state.sigma0 > 0:
        accountant = AccountantState(accountant.orders, dict(accountant.counts)).compose(state.sigma0, state.sampling_rate)
    return replace(state, params=params, importance=imp, accountant=accountant, step=step,
                   loss=float(losses.mean()), plan=plan)


def evaluate_accuracy(params: ParameterVector, spec: ModelSpec, X: np.ndarray, y: np.ndarray) -> float:
    y = np.asarray(y)
    if y.size == 0:
        raise ConfigurationError("evaluation set is empty")
    return float(np.mean(predict(spec, params, X) == y))


def steps_per_epoch(n_train: int, batch_size: int) -> int:
    if batch_size > n_train:
        raise ConfigurationError(f"batch_size {batch_size} exceeds training set size {n_train}")
    return n_train // batch_size


def resolve_sigma0(cfg: TrainConfig, n_train: int) -> float:
    """Noise multiplier for the run; calibrated to (epsilon, delta) unless given."""
    if cfg.mode == "non_private":
        return 0.0
    if cfg.sigma0 is not None:
        return float(cfg.sigma0)
    T = cfg.epochs * steps_per_epoch(n_train, cfg.batch_size)
    if T == 0:
        return 0.0
    return calibrate_sigma(PrivacySpec(cfg.epsilon, cfg.delta, cfg.batch_size / n_train, T))


def _epsilon(state: TrainState, cfg: TrainConfig) -> float:
    if cfg.mode == "non_private":
        return math.inf
    if state.sigma0 == 0 and state.step > 0:
        return math.inf
    return to_epsilon(state.accountant, cfg.delta).epsilon


def train(cfg: TrainConfig, train_set, val_set=None) -> RunRecord:
    """Run the configured number of epochs; deterministic given ``cfg.seed``.

    ``train_set``/``val_set`` are anything with ``X`` and ``y`` arrays. The
    validation set defaults to the training set.
    """
    X, y = np.asarray(train_set.X), np.asarray(train_set.y)
    val = val_set if val_set is not None else train_set
    n = y.size
    if n == 0:
        raise ConfigurationError("training set is empty")
    per_epoch = steps_per_epoch(n, cfg.batch_size)
    sigma0 = resolve_sigma0(cfg, n)
    state = init_state(cfg, sigma0, cfg.batch_size / n)
    record = RunRecord(config=cfg.to_dict(), sigma0=sigma0)
    shuffle_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))

    def log_eval():
        record.evals.append(EvalRecord(state.step, evaluate_accuracy(state.params, cfg.model, val.X, val.y)))

    log_eval()
    for _ in range(cfg.epochs):
        order = shuffle_rng.permutation(n)
        for b in range(per_epoch):
            idx = order[b * cfg.batch_size:(b + 1) * cfg.batch_size]
            state = train_step(state, Batch(X[idx], y[idx]), cfg)
            record.steps.append(StepRecord(state.step, state.loss, _epsilon(state, cfg)))
            if state.step % cfg.log_every == 0 and state.plan is not None:
                _log_noise(record, state, cfg)
            if state.step % cfg.eval_every == 0:
                log_eval()
    if not record.evals or record.evals[-1].step != state.step:
        log_eval()
    record.final_epsilon = _epsilon(state, cfg) if state.step else 0.0
    record.params_digest = params_digest(state.params)
    record.final_params = state.params
    return record


def _log_noise(record: RunRecord, state: TrainState, cfg: TrainConfig) -> None:
    gmap = state.params.group_map
    for (label, start, length), (_, sd) in zip(gmap, state.plan.group_stddev(gmap)):
        m = float(state.importance.I_norm[start:start + length].mean())
        record.noise.append(NoiseRecord(state.step, label, m, sd))


class TTestResult(NamedTuple):
    t: float
    p: float
    n: int
    mean: float
    degenerate: bool = False


def paired_one_tailed_t(diffs) -> TTestResult:
    """One-tailed paired t-test of H1: mean(diffs) > 0."""
    d = np.asarray(diffs, dtype=np.float64)
    if d.size < 2:
        raise ConfigurationError("paired t-test needs at least two differences")
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        p = 0.0 if mean > 0 else (1.0 if mean < 0 else 0.5)
        t = math.copysign(math.inf, mean) if mean else 0.0
        return TTestResult(t, p, d.size, mean, degenerate=True)
    t = mean / (sd / math.sqrt(d.size))
    return TTestResult(t, float(stats.t.sf(t, d.size - 1)), d.size, mean)
