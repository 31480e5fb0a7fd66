import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gen import assumed_model, rel_err, seeds
from kfmse.kalman import (
    InformationNotPd,
    kf_backward,
    kf_forward,
    rts_smooth,
    smooth_two_filter,
    two_filter_combine,
    information,
)
from kfmse.models import AssumedModel, reversed_time_model


@pytest.fixture
def static():
    """x_k = x_0 ~ N(0, 1), y_k = x_k + N(0, 1)."""
    return AssumedModel([[1.0]], [[0.0]], [[1.0]], [[1.0]], [0.0], [[1.0]])


def test_filter_one_step(static):
    f = kf_forward(static, [[2.0]])
    assert f.innov_cov[0, 0, 0] == pytest.approx(2.0)
    assert f.gain[0, 0, 0] == pytest.approx(0.5)
    assert f.x_filt[0, 0] == pytest.approx(1.0)
    assert f.P_filt[0, 0, 0] == pytest.approx(0.5)


def test_filter_two_steps(static):
    f = kf_forward(static, [[2.0], [2.0]])
    assert f.x_filt[1, 0] == pytest.approx(4 / 3)
    assert f.P_filt[1, 0, 0] == pytest.approx(1 / 3)


def test_rts_two_steps(static):
    s = rts_smooth(static, kf_forward(static, [[1.0], [1.0]]))
    assert s.x_smooth[0, 0] == pytest.approx(2 / 3)
    assert s.P_smooth[0, 0, 0] == pytest.approx(1 / 3)


def test_static_smoother_is_constant(static):
    y = np.array([[0.3], [1.7], [-0.4], [2.2]])
    f = kf_forward(static, y)
    s = rts_smooth(static, f)
    assert np.allclose(s.x_smooth, f.x_filt[-1])


def test_backward_two_steps(static):
    rt = reversed_time_model(static, 1)
    b = kf_backward(static, rt, [[1.0], [1.0]])
    assert b.x_filt_b[1, 0] == pytest.approx(0.5)
    assert b.P_filt_b[1, 0, 0] == pytest.approx(0.5)
    assert b.x_pred_b[0, 0] == pytest.approx(0.5)
    assert b.P_pred_b[0, 0, 0] == pytest.approx(0.5)
    assert b.x_filt_b[0, 0] == pytest.approx(2 / 3)
    assert b.P_filt_b[0, 0, 0] == pytest.approx(1 / 3)


def test_two_filter_two_steps(static):
    s = smooth_two_filter(static, [[1.0], [1.0]])
    assert s.P_smooth[0, 0, 0] == pytest.approx(1 / 3)
    assert s.x_smooth[0, 0] == pytest.approx(2 / 3)


def test_gains_only_mode_matches(static):
    y = [[1.0], [0.0], [3.0]]
    a, b = kf_forward(static, y), kf_forward(static, K=2)
    assert np.array_equal(a.P_filt, b.P_filt) and b.x_filt is None
    with pytest.raises(ValueError):
        kf_forward(static)


def test_batched_filter_matches_single():
    rng = np.random.default_rng(3)
    am = assumed_model(rng, 3)
    y = rng.standard_normal((6, 4, am.n_y))
    fb = kf_forward(am, y)
    for j in range(4):
        fj = kf_forward(am, y[:, j])
        assert np.allclose(fb.x_filt[:, j], fj.x_filt, rtol=1e-12, atol=1e-12)


@settings(max_examples=60)
@given(seeds, st.sampled_from([1, 2, 4]), st.integers(0, 25))
def test_joseph_equals_standard_form(seed, n, K):
    am = assumed_model(np.random.default_rng(seed), n)
    f = kf_forward(am, K=K)
    H = am.H
    for k in range(K + 1):
        G = f.gain[k]
        std = f.P_pred[k] - G @ f.innov_cov[k] @ G.T
        assert rel_err(f.P_filt[k], std) < 1e-8


@settings(max_examples=60)
@given(seeds, st.sampled_from([1, 2, 4]), st.integers(1, 25))
def test_two_filter_matches_rts(seed, n, K):
    rng = np.random.default_rng(seed)
    am = assumed_model(rng, n)
    y = rng.standard_normal((K + 1, am.n_y))
    r = rts_smooth(am, kf_forward(am, y))
    s = smooth_two_filter(am, y)
    assert rel_err(s.P_smooth, r.P_smooth) < 1e-8
    assert rel_err(s.x_smooth, r.x_smooth) < 1e-8


def test_combination_rejects_non_pd_information(static):
    rt = reversed_time_model(static, 1)
    f, b = kf_forward(static, K=1), kf_backward(static, rt)
    bad = rt.Sigma_inv * 1e6
    with pytest.raises(InformationNotPd):
        information(rt.moments, f, b, bad)


def test_combine_without_states_gives_covariance_only(static):
    rt = reversed_time_model(static, 2)
    f, b = kf_forward(static, K=2), kf_backward(static, rt)
    s = two_filter_combine(rt.moments, f, b)
    assert s.x_smooth is None
    assert np.allclose(s.P_smooth, rts_smooth(static, f).P_smooth)
