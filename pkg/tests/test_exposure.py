import math

import numpy as np
import pytest

from anadp.data import VOCAB, random_text, windows
from anadp.errors import ConfigurationError
from anadp.exposure import (
    AuditConfig,
    CanarySpec,
    build_corpus,
    exposure,
    insert_canaries,
    mrr,
    run_audit,
    score_candidates,
    synthetic_names,
)
from anadp.mechanism import ClipConfig
from anadp.models import ModelSpec, ParameterVector, init_params, log_probs
from anadp.trainer import TrainConfig

V = len(VOCAB)
LM = ModelSpec("char_lm", 4, V, hidden_dim=16, vocab_size=V, context_len=8)


def digit_spec(k=3, reps=5):
    return CanarySpec("digit_sequence", "my pin is ", reps, pattern_length=k)


@pytest.mark.parametrize("rank,space,bits", [(1, 10**4, 13.2877), (16, 16, 0.0), (5, 16, 1.6781)])
def test_exposure_examples(rank, space, bits):
    assert exposure(rank, space) == pytest.approx(bits, abs=1e-4)


def test_exposure_strictly_decreasing():
    vals = [exposure(r, 100) for r in range(1, 101)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    with pytest.raises(ConfigurationError):
        exposure(0, 10)
    with pytest.raises(ConfigurationError):
        exposure(11, 10)


def test_mrr_examples():
    assert mrr([1, 1, 1]) == 1.0
    assert mrr([1, 2, 4]) == pytest.approx(1.75 / 3)
    assert mrr([7]) == pytest.approx(1 / 7)
    with pytest.raises(ConfigurationError):
        mrr([])


def test_canary_spec_validation():
    with pytest.raises(ConfigurationError):
        CanarySpec("digit_sequence", "pin ", 0)
    with pytest.raises(ConfigurationError):
        CanarySpec("digit_sequence", "pin ", 1, pattern_length=7)
    with pytest.raises(ConfigurationError):
        CanarySpec("name_token", "name ", 1)
    with pytest.raises(ConfigurationError):
        CanarySpec("digit_sequence", "PIN!", 1)


def test_insert_canaries():
    lines = random_text(2000, 0)
    spec = digit_spec(4, 50)
    out, secret = insert_canaries(lines, spec, seed=5)
    assert len(out) == len(lines) + 50
    assert out.count(spec.prefix + secret) == 50
    again, secret2 = insert_canaries(lines, spec, seed=5)
    assert secret2 == secret and again == out
    assert len(secret) == 4 and secret.isdigit()


def test_uniform_model_ranks_lexicographically():
    zero = ParameterVector(np.zeros(LM.num_params), LM.group_map())
    ranking = score_candidates(LM, zero, digit_spec(3))
    assert ranking.candidates[:3] == ["000", "001", "002"]
    assert ranking.rank_of("417") == 418
    names = CanarySpec("name_token", "boss is ", 1, candidates=("zed", "amy", "bob"))
    r = score_candidates(LM, zero, names)
    assert r.candidates == ["amy", "bob", "zed"]
    single = CanarySpec("name_token", "boss is ", 1, candidates=("kim",))
    assert score_candidates(LM, init_params(LM, 0), single).rank_of("kim") == 1


def test_digit_tree_scores_match_direct_scoring():
    p = init_params(LM, 2)
    spec = digit_spec(2)
    ranking = score_candidates(LM, p, spec)
    lookup = dict(zip(ranking.candidates, ranking.loglik))
    as_names = CanarySpec("name_token", spec.prefix, 1, candidates=tuple(spec.candidate_list()))
    direct = score_candidates(LM, p, as_names)
    for c, ll in zip(direct.candidates, direct.loglik):
        assert lookup[c] == pytest.approx(ll, abs=1e-10)
    assert ranking.candidates == direct.candidates


def test_scoring_hand_check():
    p = init_params(LM, 1)
    spec = digit_spec(2)
    ranking = score_candidates(LM, p, spec)
    ctx = windows(["my pin is 42"], LM.context_len)
    lp = log_probs(LM, p, ctx.X[-2:])
    expect = lp[0, ctx.y[-2]] + lp[1, ctx.y[-1]]
    assert dict(zip(ranking.candidates, ranking.loglik))["42"] == pytest.approx(expect, abs=1e-12)


def test_ranking_invariant_to_enumeration_order():
    p = init_params(LM, 4)
    names = synthetic_names(30, 4, 0)
    a = score_candidates(LM, p, CanarySpec("name_token", "x is ", 1, candidates=names))
    b = score_candidates(LM, p, CanarySpec("name_token", "x is ", 1, candidates=tuple(reversed(names))))
    assert a.candidates == b.candidates


def test_build_corpus_with_names():
    audit = AuditConfig(corpus_tokens=3000, repetitions=3, name_canaries=2, name_candidates=20, name_repetitions=3)
    lines, dspec, secret, nspecs, nsecrets = build_corpus(audit, 0)
    assert len(nspecs) == 2 and all(s in nspecs[0].candidates for s in nsecrets)
    assert sum(line == dspec.prefix + secret for line in lines) == 3


def test_memorization_smoke():
    """Non-private training on many repetitions ranks the secret first."""
    spec = ModelSpec("char_lm", 8, V, hidden_dim=64, vocab_size=V, context_len=8)
    audit = AuditConfig(corpus_tokens=5000, digits=3, repetitions=40)
    c = TrainConfig(spec, mode="non_private", lr=0.5, epochs=6, batch_size=64, seed=1,
                    eval_every=10**6, log_every=10**6)
    report = run_audit(c, audit)
    assert report.canary_rank == 1
    assert report.exposure_bits == pytest.approx(math.log2(1000))
