import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gen import random_scenario, rel_err, seeds
from gen import assumed_model, mismatched
from oracles import noiseless_bias, rts_sensitivity, sensitivity_covariances
from kfmse.models import AssumedModel, Trajectory, TrueMeasModel
from kfmse.mse import (
    ScenarioError,
    estimator_passes,
    iter_mse,
    mismatch_sequences,
    predict_mse,
    predictor_state,
)


@pytest.fixture
def worked():
    am = AssumedModel([[1.0]], [[0.0]], [[1.0]], [[1.0]], [0.0], [[1.0]])
    tm = TrueMeasModel([[1.0]], [[2.0]])
    return Trajectory([1.0, 1.0]), tm, am


def test_mismatch_sequences_scalar():
    am = AssumedModel([[1.0]], [[1.0]], [[1.0]], [[1.0]], [0.0], [[1.0]])
    tm = TrueMeasModel([[1.0]], [[1.0]])
    ms = mismatch_sequences(Trajectory([1.0, 1.0]), tm, am, estimator_passes(am, 1).moments)
    assert ms.w_tilde[1, 0] == 0.0
    assert ms.b_prior[:, 0] == pytest.approx([-1, -1])
    assert np.all(ms.v_tilde == 0)


def test_worked_bias(worked):
    st_, _ = predictor_state(*worked)
    assert st_.b_fwd[:, 0] == pytest.approx([-0.5, -1 / 3])
    assert st_.b_bwd[0, 0] == pytest.approx(-1 / 3)
    assert st_.b_bwd[1, 0] == pytest.approx(-0.5)
    assert st_.b_bwd_pred[:, 0] == pytest.approx([-0.5, -1])
    assert st_.b_smooth[0, 0] == pytest.approx(-1 / 3)


def test_worked_covariance(worked):
    st_, _ = predictor_state(*worked)
    assert st_.C_fwd[:, 0, 0] == pytest.approx([0.5, 4 / 9])
    assert st_.C_bwd[:, 0, 0] == pytest.approx([4 / 9, 0.5])
    assert st_.C_bwd_pred[:, 0, 0] == pytest.approx([0.5, 0.0])
    assert st_.C_smooth[:, 0, 0] == pytest.approx([4 / 9, 4 / 9])


def test_worked_mse(worked):
    r = predict_mse(*worked)
    assert r.mse_filter[:, 0, 0] == pytest.approx([0.75, 5 / 9])
    assert r.mse_smoother[:, 0, 0] == pytest.approx([5 / 9, 5 / 9])
    assert r.rmse_filter()[0, 0] == pytest.approx(np.sqrt(0.75))


def test_worked_against_oracles(worked):
    t, tm, am = worked
    st_, _ = predictor_state(t, tm, am)
    nb = noiseless_bias(t, tm, am)
    sc = sensitivity_covariances(tm, am, t.K)
    for key in ("b_fwd", "b_bwd", "b_bwd_pred", "b_smooth"):
        assert np.allclose(getattr(st_, key), nb[key], rtol=1e-12, atol=1e-14), key
    for key in sc:
        assert np.allclose(getattr(st_, key), sc[key], rtol=1e-12, atol=1e-14), key


def test_invalid_scenario_raises():
    am = AssumedModel([[1.0]], [[0.0]], [[1.0]], [[-1.0]], [0.0], [[1.0]])
    with pytest.raises(ScenarioError):
        predict_mse(Trajectory([1.0, 1.0]), TrueMeasModel([[1.0]], [[1.0]]), am)


@settings(max_examples=40)
@given(seeds, st.sampled_from([1, 2, 3, 4]), st.integers(0, 20))
def test_bias_matches_noiseless_run(seed, n, K):
    t, tm, am = random_scenario(seed, n, K)
    st_, _ = predictor_state(t, tm, am)
    nb = noiseless_bias(t, tm, am)
    for key in ("b_fwd", "b_bwd", "b_bwd_pred", "b_smooth"):
        assert rel_err(getattr(st_, key), nb[key]) < 1e-9, key
    assert rel_err(st_.b_smooth, nb["b_rts"]) < 1e-9


@settings(max_examples=25)
@given(seeds, st.sampled_from([1, 2, 3, 4]), st.integers(0, 12))
def test_covariance_matches_sensitivity(seed, n, K):
    t, tm, am = random_scenario(seed, n, K)
    st_, _ = predictor_state(t, tm, am)
    sc = sensitivity_covariances(tm, am, K)
    for key, ref in sc.items():
        assert rel_err(getattr(st_, key), ref) < 1e-8, key


@settings(max_examples=30)
@given(seeds, st.sampled_from([1, 2, 4]), st.integers(0, 40), st.integers(1, 9))
def test_streaming_matches_batch(seed, n, K, chunk):
    t, tm, am = random_scenario(seed, n, K)
    r = predict_mse(t, tm, am)
    rows = list(iter_mse(t, tm, am, chunk=chunk))
    assert [row.k for row in rows] == list(range(K + 1))
    for name in ("mse_filter", "mse_smoother", "bias_filter", "bias_smoother",
                 "cov_filter", "cov_smoother", "assumed_P_filter", "assumed_P_smoother"):
        got = np.stack([getattr(row, name) for row in rows])
        assert rel_err(got, getattr(r, name)) < 1e-10, name


def test_decomposition_holds():
    t, tm, am = random_scenario(11, 4, 30)
    r = predict_mse(t, tm, am)
    outer = r.bias_filter[:, :, None] * r.bias_filter[:, None, :]
    assert np.allclose(r.mse_filter, r.cov_filter + outer)


@settings(max_examples=25)
@given(seeds, st.sampled_from([1, 2, 3, 4]), st.integers(0, 15))
def test_covariance_matches_rts_impulse_response(seed, n, K):
    t, tm, am = random_scenario(seed, n, K)
    r = predict_mse(t, tm, am)
    C_f, C_s = rts_sensitivity(am, tm.R_bar, K)
    assert rel_err(r.cov_filter, C_f) < 1e-8
    assert rel_err(r.cov_smoother, C_s) < 1e-8


def test_smoother_noise_covariance_can_exceed_filter():
    """With matched H and R the smoother still may carry more measurement
    noise than the filter: where the filter leans on the prior (which is
    noise free here) the smoother trades that prior for noisy future data."""
    rng = np.random.default_rng(253)
    n, K = int(rng.integers(1, 5)), int(rng.integers(0, 30))
    am = assumed_model(rng, n)
    t, _ = mismatched(rng, am, K)
    r = predict_mse(t, TrueMeasModel(am.H, am.R), am)
    C_f, C_s = rts_sensitivity(am, am.R, K)
    assert np.trace(r.cov_smoother[0]) > 10 * np.trace(r.cov_filter[0])
    assert rel_err(r.cov_smoother, C_s) < 1e-12
    # the total assumed uncertainty still shrinks
    assert np.trace(r.assumed_P_smoother[0]) < np.trace(r.assumed_P_filter[0])


def test_smoother_noise_covariance_shrinks_in_static_scalar_case(worked):
    t, _, am = worked
    r = predict_mse(t, TrueMeasModel([[1.0]], [[1.0]]), am)
    assert r.cov_smoother[0, 0, 0] == pytest.approx(2 / 9)
    assert r.cov_filter[0, 0, 0] == pytest.approx(0.25)
