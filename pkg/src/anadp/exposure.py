"""Canary insertion and memorization audits for the character LM.

A canary is ``prefix + secret`` inserted ``repetitions`` times as extra
lines of a synthetic corpus. After training, every candidate secret is
scored by its log-likelihood given the prefix. The true secret's rank among
candidates gives exposure (digit secrets) and reciprocal rank (names).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from anadp.data import VOCAB, encode, random_text, train_val_split, windows
from anadp.errors import ConfigurationError
from anadp.models import ModelSpec, ParameterVector, log_probs

CANARY_KINDS = ("digit_sequence", "name_token")
MAX_SPACE = 10**6


@dataclass(frozen=True)
class CanarySpec:
    kind: str
    prefix: str
    repetitions: int
    pattern_length: int = 4
    candidates: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in CANARY_KINDS:
            raise ConfigurationError(f"unknown canary kind {self.kind!r}")
        if self.repetitions < 1:
            raise ConfigurationError("canary repetitions must be >= 1")
        encode(self.prefix)
        if self.kind == "digit_sequence":
            if not (1 <= self.pattern_length <= 6):
                raise ConfigurationError("digit canaries need 1..6 digits (space <= 10^6)")
        else:
            if not self.candidates:
                raise ConfigurationError("name canaries need a candidate set")
            if len(set(self.candidates)) != len(self.candidates):
                raise ConfigurationError("name candidates must be distinct")
            if len(self.candidates) > MAX_SPACE:
                raise ConfigurationError("candidate set too large to enumerate")
            for c in self.candidates:
                encode(c)

    @property
    def space_size(self) -> int:
        if self.kind == "digit_sequence":
            return 10**self.pattern_length
        return len(self.candidates)

    def candidate_list(self) -> list[str]:
        if self.kind == "digit_sequence":
            k = self.pattern_length
            return [f"{i:0{k}d}" for i in range(10**k)]
        return list(self.candidates)

    def draw_secret(self, seed: int) -> str:
        rng = np.random.default_rng(np.random.SeedSequence([seed, 7]))
        if self.kind == "digit_sequence":
            return f"{int(rng.integers(10**self.pattern_length)):0{self.pattern_length}d}"
        return self.candidates[int(rng.integers(len(self.candidates)))]


def insert_canaries(lines: Sequence[str], spec: CanarySpec, seed: int) -> tuple[list[str], str]:
    """Append ``spec.repetitions`` copies of ``prefix + secret`` at seeded positions."""
    secret = spec.draw_secret(seed)
    out = list(lines)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 8]))
    for pos in sorted(rng.integers(0, len(out) + 1, size=spec.repetitions), reverse=True):
        out.insert(int(pos), spec.prefix + secret)
    return out, secret


class Ranking(NamedTuple):
    candidates: list[str]  # best first
    loglik: np.ndarray

    def rank_of(self, secret: str) -> int:
        try:
            return self.candidates.index(secret) + 1
        except ValueError:
            raise ConfigurationError(f"{secret!r} is not a candidate") from None


def _context(text_ids: np.ndarray, context_len: int) -> np.ndarray:
    padded = np.concatenate([np.zeros(context_len, dtype=np.int64), text_ids])
    return padded[-context_len:]


def _score_digits(model: ModelSpec, params: ParameterVector, prefix: str, length: int) -> np.ndarray:
    """Log-likelihood of all 10**length digit strings, in numeric order.

    Expands the prefix tree level by level so shared prefixes are scored once.
    """
    L = model.context_len
    digit_ids = np.array([VOCAB.index(str(d)) for d in range(10)])
    ctx = _context(encode(prefix), L)[None, :]
    scores = np.zeros(1)
    for _ in range(length):
        lp = log_probs(model, params, ctx)[:, digit_ids]  # (m, 10)
        scores = (scores[:, None] + lp).reshape(-1)
        ctx = np.concatenate([np.repeat(ctx[:, 1:], 10, axis=0), np.tile(digit_ids, ctx.shape[0])[:, None]], axis=1)
    return scores


def _score_strings(model: ModelSpec, params: ParameterVector, prefix: str, candidates: Sequence[str]) -> np.ndarray:
    L = model.context_len
    pre = encode(prefix)
    X, y, owner = [], [], []
    for k, cand in enumerate(candidates):
        ids = np.concatenate([np.zeros(L, dtype=np.int64), pre, encode(cand)])
        for pos in range(L + pre.size, ids.size):
            X.append(ids[pos - L:pos])
            y.append(ids[pos])
            owner.append(k)
    X, y, owner = np.array(X), np.array(y), np.array(owner)
    scores = np.zeros(len(candidates))
    for s in range(0, y.size, 65536):
        lp = log_probs(model, params, X[s:s + 65536])[np.arange(min(65536, y.size - s)), y[s:s + 65536]]
        np.add.at(scores, owner[s:s + 65536], lp)
    return scores


def score_candidates(model: ModelSpec, params: ParameterVector, spec: CanarySpec) -> Ranking:
    """Candidates sorted by descending log-likelihood, ties lexicographic."""
    if spec.space_size > MAX_SPACE:
        raise ConfigurationError("candidate space too large to enumerate")
    cands = spec.candidate_list()
    if spec.kind == "digit_sequence":
        scores = _score_digits(model, params, spec.prefix, spec.pattern_length)
    else:
        scores = _score_strings(model, params, spec.prefix, cands)
    order = sorted(range(len(cands)), key=lambda i: (-scores[i], cands[i]))
    return Ranking([cands[i] for i in order], scores[order])


def exposure(rank: int, space_size: int) -> float:
    if not (1 <= rank <= space_size):
        raise ConfigurationError(f"rank {rank} outside [1, {space_size}]")
    return math.log2(space_size) - math.log2(rank)


def mrr(ranks: Sequence[int]) -> float:
    ranks = list(ranks)
    if not ranks:
        raise ConfigurationError("mrr of an empty rank list")
    if min(ranks) < 1:
        raise ConfigurationError("ranks start at 1")
    return float(np.mean([1.0 / r for r in ranks]))


@dataclass
class ExposureReport:
    mode: str
    seed: int
    canary_rank: int
    space_size: int
    exposure_bits: float
    secret: str
    mrr: Optional[float] = None
    name_ranks: list[int] = field(default_factory=list)
    epsilon: float = 0.0
    sigma0: float = 0.0
    best_accuracy: float = math.nan

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class AuditConfig:
    """Corpus and canary layout for one exposure run."""

    corpus_tokens: int = 50_000
    digits: int = 4
    repetitions: int = 50
    prefix: str = "my pin is "
    name_canaries: int = 0
    name_candidates: int = 1000
    name_length: int = 5
    name_repetitions: int = 50
    corpus_seed: int = 0


def synthetic_names(n: int, length: int, seed: int) -> tuple[str, ...]:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 9]))
    letters = np.array(list("abcdefghijklmnopqrstuvwxyz"))
    names: dict[str, None] = {}
    while len(names) < n:
        names["".join(rng.choice(letters, size=length))] = None
    return tuple(sorted(names))


def build_corpus(audit: AuditConfig, seed: int):
    """Synthetic text with one digit canary and optional name canaries.

    Returns ``(lines, digit_spec, digit_secret, name_specs, name_secrets)``.
    """
    lines = random_text(audit.corpus_tokens, audit.corpus_seed)
    digit_spec = CanarySpec("digit_sequence", audit.prefix, audit.repetitions, pattern_length=audit.digits)
    lines, secret = insert_canaries(lines, digit_spec, seed)
    name_specs, name_secrets = [], []
    if audit.name_canaries:
        cands = synthetic_names(audit.name_candidates, audit.name_length, audit.corpus_seed)
        tags = synthetic_names(audit.name_canaries, 4, audit.corpus_seed + 1)
        for k, tag in enumerate(tags):
            ns = CanarySpec("name_token", f"{tag} name is ", audit.name_repetitions, candidates=cands)
            lines, s = insert_canaries(lines, ns, seed * 1000 + k + 1)
            name_specs.append(ns)
            name_secrets.append(s)
    return lines, digit_spec, secret, name_specs, name_secrets


def run_audit(train_cfg, audit: AuditConfig) -> ExposureReport:
    """Train the char LM on a canary corpus and rank the inserted secrets."""
    from anadp.trainer import train  # local: trainer is the heavier import

    model = train_cfg.model
    if model.kind != "char_lm":
        raise ConfigurationError("exposure audits need a char_lm model")
    lines, dspec, secret, name_specs, name_secrets = build_corpus(audit, train_cfg.seed)
    ds = windows(lines, model.context_len)
    _, val = train_val_split(ds, 0.02, audit.corpus_seed)
    record = train(train_cfg, ds, val)
    params = record.final_params
    rank = score_candidates(model, params, dspec).rank_of(secret)
    name_ranks = [score_candidates(model, params, ns).rank_of(s) for ns, s in zip(name_specs, name_secrets)]
    return ExposureReport(
        mode=train_cfg.mode,
        seed=train_cfg.seed,
        canary_rank=rank,
        space_size=dspec.space_size,
        exposure_bits=exposure(rank, dspec.space_size),
        secret=secret,
        mrr=mrr(name_ranks) if name_ranks else None,
        name_ranks=name_ranks,
        epsilon=record.final_epsilon,
        sigma0=record.sigma0,
        best_accuracy=record.best_accuracy,
    )
