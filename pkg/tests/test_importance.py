import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from anadp.errors import ConfigurationError, NumericError
from anadp.importance import (
    ImportanceConfig,
    ImportanceState,
    group_summary,
    instantaneous_sensitivity,
    normalize,
    update_moving_averages,
)
from anadp.models import ParameterVector

CFG = ImportanceConfig()

importance_vectors = arrays(
    np.float64, st.integers(4, 300),
    elements=st.floats(0, 1e6, allow_nan=False, allow_infinity=False),
)


def state(S, U):
    S, U = np.array(S, float), np.array(U, float)
    return ImportanceState(S, U, S * U, np.ones(S.size), 0)


def test_instantaneous_sensitivity():
    np.testing.assert_array_equal(instantaneous_sensitivity([2.0, -1.0], ParameterVector([0.5, 3.0])), [1.0, 3.0])
    np.testing.assert_array_equal(instantaneous_sensitivity(np.zeros(3), np.array([1.0, 2, 3])), 0)
    np.testing.assert_array_equal(instantaneous_sensitivity([1.0, -4.0], np.zeros(2)), 0)
    with pytest.raises(ConfigurationError):
        instantaneous_sensitivity([1.0], np.zeros(2))


@pytest.mark.parametrize(
    "b1,b2,S,U,s,expect_S,expect_U,expect_I",
    [
        (0.0, 0.0, [0, 0], [0, 0], [1, 3], [1, 3], [0, 0], [0, 0]),
        (1.0, 1.0, [5], [2], [17], [5], [2], [10]),
        (0.5, 0.5, [0], [0], [4], [2], [1], [2]),
    ],
)
def test_moving_average_examples(b1, b2, S, U, s, expect_S, expect_U, expect_I):
    cfg = ImportanceConfig(beta1=b1, beta2=b2)
    out = update_moving_averages(state(S, U), np.array(s, float), cfg)
    np.testing.assert_array_equal(out.S, expect_S)
    np.testing.assert_array_equal(out.U, expect_U)
    np.testing.assert_array_equal(out.I, expect_I)
    assert out.step == 1


def test_zero_state():
    st0 = ImportanceState.zeros(5)
    assert st0.step == 0 and not st0.S.any() and not st0.U.any()


def test_normalize_constant_falls_back_to_ones():
    np.testing.assert_array_equal(normalize(np.full(4, 3.7), CFG), np.ones(4))
    np.testing.assert_array_equal(normalize(np.zeros(10), CFG), np.ones(10))


@given(importance_vectors)
def test_alpha_one_is_exactly_uniform(I):
    np.testing.assert_array_equal(normalize(I, ImportanceConfig(alpha=1.0)), np.ones(I.size))


def test_normalize_hand_example():
    # median 2.5, IQR 1.5 -> scaled [-1,-1/3,1/3,1], mu = 0
    out = normalize(np.array([1.0, 2, 3, 4]), ImportanceConfig(alpha=0.1))
    np.testing.assert_allclose(out, [0.1, 0.7, 1.3, 1.9], atol=1e-12)


@given(importance_vectors)
def test_normalize_mean_one_and_floor(I):
    out = normalize(I, CFG)
    assert abs(out.mean() - 1.0) <= 1e-9
    assert out.min() >= CFG.floor


@given(importance_vectors, st.floats(1e-6, 1e6))
def test_normalize_scale_invariant(I, c):
    np.testing.assert_allclose(normalize(c * I, CFG), normalize(I, CFG), rtol=1e-6, atol=1e-6)


@given(importance_vectors)
def test_normalize_monotone(I):
    out = normalize(I, CFG)
    order = np.argsort(I, kind="stable")
    assert np.all(np.diff(out[order]) >= -1e-9)


def test_normalize_heavy_tail_clamps_and_recenters():
    I = np.concatenate([np.linspace(1e-3, 2e-3, 96), [10.0, 50.0, 100.0, 1000.0]])
    out = normalize(I, CFG)
    assert abs(out.mean() - 1) < 1e-12
    assert out.min() >= CFG.floor
    assert out[-1] == out.max() > 1
    assert out[0] == CFG.floor


def test_normalize_errors():
    with pytest.raises(ConfigurationError):
        normalize(np.ones(3), CFG)
    with pytest.raises(NumericError):
        normalize(np.array([1.0, 2.0, np.inf, 4.0]), CFG)


def test_config_validation():
    with pytest.raises(ConfigurationError):
        ImportanceConfig(q_hi=0.2, q_lo=0.3)
    with pytest.raises(ConfigurationError):
        ImportanceConfig(beta1=1.5)
    with pytest.raises(ConfigurationError):
        ImportanceConfig(floor=1.0)


def test_group_summary_examples():
    gm = (("all", 0, 4),)
    [only] = group_summary(np.ones(4), gm)
    assert only.mean_importance == 1.0 and only.noise_multiplier == 1.0
    a, b = group_summary(np.array([0.5, 0.5, 1.5, 1.5]), (("a", 0, 2), ("b", 2, 2)))
    assert (a.mean_importance, b.mean_importance) == (0.5, 1.5)


@given(arrays(np.float64, 40, elements=st.floats(0, 100)), st.integers(1, 39))
def test_group_summary_unequal_groups_recombine(I, cut):
    I_norm = normalize(I, CFG)
    groups = group_summary(I_norm, (("a", 0, cut), ("b", cut, 40 - cut)))
    total = groups[0].mean_importance * cut + groups[1].mean_importance * (40 - cut)
    assert total / 40 == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ConfigurationError):
        group_summary(I_norm, (("a", 0, cut),))
