"""Small softmax models with exact per-example gradients.

Three model kinds share one cross-entropy code path:

* ``logistic`` -- linear logits with class 0 pinned at zero, so the binary
  case is ordinary logistic regression written as a 2-class softmax.
* ``mlp1`` -- one tanh hidden layer.
* ``char_lm`` -- embeds ``context_len`` token indices, concatenates them and
  feeds a tanh hidden layer with a softmax over the vocabulary.

Everything is float64. Parameters live in a flat vector; the group map
labels contiguous slices (``W1``, ``b1``, ...) for reporting.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from anadp.errors import ConfigurationError, NumericError

MODEL_KINDS = ("logistic", "mlp1", "char_lm")


@dataclass(frozen=True)
class ModelSpec:
    """Architecture description.

    For ``char_lm``, ``input_dim`` is the per-token embedding width and
    ``num_classes`` must equal ``vocab_size``.
    """

    kind: str
    input_dim: int
    num_classes: int
    hidden_dim: int = 0
    vocab_size: int = 0
    context_len: int = 0

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ConfigurationError(f"unknown model kind {self.kind!r}; expected one of {MODEL_KINDS}")
        if self.input_dim <= 0 or self.num_classes < 2:
            raise ConfigurationError("input_dim must be positive and num_classes >= 2")
        if self.kind == "logistic" and self.hidden_dim != 0:
            raise ConfigurationError("logistic models take hidden_dim=0")
        if self.kind in ("mlp1", "char_lm") and self.hidden_dim <= 0:
            raise ConfigurationError(f"{self.kind} needs hidden_dim > 0")
        if self.kind == "char_lm":
            if self.vocab_size < 2 or self.context_len <= 0:
                raise ConfigurationError("char_lm needs vocab_size >= 2 and context_len > 0")
            if self.num_classes != self.vocab_size:
                raise ConfigurationError("char_lm predicts the next token: num_classes must equal vocab_size")

    @property
    def feature_dim(self) -> int:
        """Width of one example's feature row (token count for char_lm)."""
        return self.context_len if self.kind == "char_lm" else self.input_dim

    def layout(self) -> list[tuple[str, tuple[int, ...], int]]:
        """(label, shape, fan_in) for every parameter block, in storage order."""
        d, h, k = self.input_dim, self.hidden_dim, self.num_classes
        if self.kind == "logistic":
            return [("W", (d, k - 1), d), ("b", (k - 1,), d)]
        if self.kind == "mlp1":
            return [("W1", (d, h), d), ("b1", (h,), d), ("W2", (h, k), h), ("b2", (k,), h)]
        x = self.context_len * d
        return [
            ("embed", (self.vocab_size, d), 1),
            ("W1", (x, h), x),
            ("b1", (h,), x),
            ("W2", (h, k), h),
            ("b2", (k,), h),
        ]

    @property
    def num_params(self) -> int:
        return sum(int(np.prod(shape)) for _, shape, _ in self.layout())

    def group_map(self) -> tuple[tuple[str, int, int], ...]:
        out, start = [], 0
        for label, shape, _ in self.layout():
            n = int(np.prod(shape))
            out.append((label, start, n))
            start += n
        return tuple(out)


@dataclass(frozen=True)
class ParameterVector:
    values: np.ndarray
    group_map: tuple[tuple[str, int, int], ...] = field(default=())

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if values.ndim != 1:
            raise ConfigurationError("parameter values must be a flat vector")
        if not self.group_map:
            object.__setattr__(self, "group_map", (("all", 0, values.size),))
        validate_group_map(self.group_map, values.size)
        bad = np.flatnonzero(~np.isfinite(values))
        if bad.size:
            raise NumericError(f"non-finite parameter at index {bad[0]}", index=int(bad[0]))

    def __len__(self):
        return self.values.size

    def with_values(self, values: np.ndarray) -> "ParameterVector":
        return ParameterVector(values, self.group_map)


def validate_group_map(group_map: Sequence[tuple[str, int, int]], size: int) -> None:
    """Spans must be sorted, disjoint and tile ``[0, size)`` exactly."""
    pos = 0
    for label, start, length in group_map:
        if start != pos or length <= 0:
            raise ConfigurationError(f"group {label!r} does not continue at offset {pos}")
        pos += length
    if pos != size:
        raise ConfigurationError(f"group map covers {pos} elements, vector has {size}")


@dataclass(frozen=True)
class Batch:
    """Feature rows (real vectors or token windows) with integer labels."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X)
        y = np.asarray(self.y, dtype=np.int64)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise ConfigurationError("batch needs X of shape (n, d) and y of shape (n,)")
        if y.size == 0:
            raise ConfigurationError("batch is empty")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def size(self) -> int:
        return self.y.size

    def take(self, idx) -> "Batch":
        return Batch(self.X[idx], self.y[idx])


def init_params(spec: ModelSpec, seed: int) -> ParameterVector:
    """Uniform in +-1/sqrt(fan_in) per block, seeded."""
    rng = np.random.default_rng(seed)
    blocks = []
    for _, shape, fan_in in spec.layout():
        bound = 1.0 / np.sqrt(fan_in)
        blocks.append(rng.uniform(-bound, bound, size=int(np.prod(shape))))
    return ParameterVector(np.concatenate(blocks), spec.group_map())


def unpack(spec: ModelSpec, values: np.ndarray) -> dict[str, np.ndarray]:
    """Reshaped views into the flat vector, keyed by block label."""
    out, start = {}, 0
    for label, shape, _ in spec.layout():
        n = int(np.prod(shape))
        out[label] = values[start:start + n].reshape(shape)
        start += n
    return out


def _check(spec: ModelSpec, params: ParameterVector, batch: Batch) -> None:
    if len(params) != spec.num_params:
        raise ConfigurationError(f"model expects {spec.num_params} parameters, got {len(params)}")
    if batch.X.shape[1] != spec.feature_dim:
        raise ConfigurationError(f"model expects {spec.feature_dim} features, batch has {batch.X.shape[1]}")
    if batch.y.min() < 0 or batch.y.max() >= spec.num_classes:
        raise ConfigurationError(f"labels must lie in [0, {spec.num_classes})")
    if spec.kind == "char_lm":
        if not np.issubdtype(batch.X.dtype, np.integer):
            raise ConfigurationError("char_lm expects integer token windows")
        if batch.X.min() < 0 or batch.X.max() >= spec.vocab_size:
            raise ConfigurationError(f"token ids must lie in [0, {spec.vocab_size})")


def _forward(spec: ModelSpec, p: dict[str, np.ndarray], X: np.ndarray):
    """Logits plus the cache needed for backprop."""
    cache = {}
    with np.errstate(over="ignore", invalid="ignore"):
        logits = _logits(spec, p, X, cache)
    bad = np.flatnonzero(~np.all(np.isfinite(logits), axis=1))
    if bad.size:
        raise NumericError(f"non-finite activation for example {bad[0]}", index=int(bad[0]))
    return logits, cache


def _logits(spec, p, X, cache):
    if spec.kind == "logistic":
        z = X @ p["W"] + p["b"]
        logits = np.concatenate([np.zeros((X.shape[0], 1)), z], axis=1)
        cache["x"] = X
    else:
        if spec.kind == "char_lm":
            x = p["embed"][X].reshape(X.shape[0], -1)
        else:
            x = X.astype(np.float64, copy=False)
        h = np.tanh(x @ p["W1"] + p["b1"])
        logits = h @ p["W2"] + p["b2"]
        cache.update(x=x, h=h)
    return logits


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    m = logits.max(axis=1, keepdims=True)
    shifted = logits - m
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def logits(spec: ModelSpec, params: ParameterVector, X: np.ndarray) -> np.ndarray:
    return _forward(spec, unpack(spec, params.values), np.asarray(X))[0]


def log_probs(spec: ModelSpec, params: ParameterVector, X: np.ndarray) -> np.ndarray:
    return _log_softmax(logits(spec, params, X))


def forward_loss(spec: ModelSpec, params: ParameterVector, batch: Batch) -> tuple[float, np.ndarray]:
    """Mean and per-example softmax cross-entropy."""
    _check(spec, params, batch)
    lp = _log_softmax(_forward(spec, unpack(spec, params.values), batch.X)[0])
    losses = -lp[np.arange(batch.size), batch.y]
    return float(losses.mean()), losses


def loss_and_per_example_gradients(spec: ModelSpec, params: ParameterVector, batch: Batch):
    """Returns ``(per_example_losses, grads)`` with grads of shape (n, num_params)."""
    _check(spec, params, batch)
    p = unpack(spec, params.values)
    z, cache = _forward(spec, p, batch.X)
    lp = _log_softmax(z)
    n = batch.size
    rows = np.arange(n)
    losses = -lp[rows, batch.y]
    delta = np.exp(lp)
    delta[rows, batch.y] -= 1.0  # dloss/dlogits = softmax - onehot

    if spec.kind == "logistic":
        d1 = delta[:, 1:]
        blocks = [np.einsum("ni,nj->nij", cache["x"], d1).reshape(n, -1), d1]
    else:
        h = cache["h"]
        gW2 = np.einsum("ni,nj->nij", h, delta).reshape(n, -1)
        dh = (delta @ p["W2"].T) * (1.0 - h * h)
        gW1 = np.einsum("ni,nj->nij", cache["x"], dh).reshape(n, -1)
        blocks = [gW1, dh, gW2, delta]
        if spec.kind == "char_lm":
            dx = (dh @ p["W1"].T).reshape(n, spec.context_len, spec.input_dim)
            gE = np.zeros((n, spec.vocab_size, spec.input_dim))
            ex = np.repeat(rows, spec.context_len)
            np.add.at(gE, (ex, batch.X.reshape(-1)), dx.reshape(-1, spec.input_dim))
            blocks.insert(0, gE.reshape(n, -1))
    return losses, np.concatenate(blocks, axis=1)


def per_example_gradients(spec: ModelSpec, params: ParameterVector, batch: Batch) -> np.ndarray:
    """Row i is the exact gradient of example i's loss."""
    return loss_and_per_example_gradients(spec, params, batch)[1]


def sgd_update(params: ParameterVector, grad: np.ndarray, lr: float) -> ParameterVector:
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != params.values.shape:
        raise ConfigurationError(f"gradient length {grad.size} does not match {len(params)} parameters")
    if not lr > 0:
        raise ConfigurationError("learning rate must be positive")
    return params.with_values(params.values - lr * grad)


def predict(spec: ModelSpec, params: ParameterVector, X: np.ndarray) -> np.ndarray:
    """Argmax class; ties resolve to the lowest index."""
    return np.argmax(logits(spec, params, X), axis=1)
