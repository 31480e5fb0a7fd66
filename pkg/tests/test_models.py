import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gen import assumed_model, seeds, spd
from kfmse.models import (
    AssumedModel,
    DimensionMismatch,
    NoiseFamily,
    SchurNegative,
    Trajectory,
    TrueMeasModel,
    marginal_moments,
    reversed_time_model,
    validate_scenario,
)


def scalar(F=2.0, Q=1.0, Sigma0=1.0, mu0=1.0):
    return AssumedModel([[F]], [[Q]], [[1.0]], [[1.0]], [mu0], [[Sigma0]])


def test_scalar_moments():
    mm = marginal_moments(scalar(), 2)
    assert mm.mu[:, 0] == pytest.approx([1, 2, 4])
    assert mm.Sigma[:, 0, 0] == pytest.approx([1, 5, 21])


def test_scalar_reversed_time():
    rt = reversed_time_model(scalar(), 1)
    assert rt.F_b[0, 0, 0] == pytest.approx(0.4)
    assert rt.Q_b[0, 0, 0] == pytest.approx(0.2)


def test_static_state_reverses_to_identity():
    rt = reversed_time_model(scalar(F=1.0, Q=0.0), 3)
    assert np.allclose(rt.F_b, 1.0)
    assert np.allclose(rt.Q_b, 0.0)


def test_singular_sigma_raises():
    # F = 0 with Q = 0 collapses Sigma_1 to zero
    with pytest.raises(Exception) as exc:
        reversed_time_model(scalar(F=0.0, Q=0.0), 2)
    assert isinstance(exc.value, np.linalg.LinAlgError)


def test_schur_negative_is_pd_error():
    assert issubclass(SchurNegative, np.linalg.LinAlgError)


@settings(max_examples=50)
@given(seeds, st.sampled_from([1, 2, 4, 6]), st.integers(1, 30))
def test_reversed_time_reproduces_moments(seed, n, K):
    am = assumed_model(np.random.default_rng(seed), n)
    rt = reversed_time_model(am, K)
    mu, S = rt.moments.mu, rt.moments.Sigma
    # backward dynamics must regenerate the forward marginals
    S_back = rt.F_b @ S[1:] @ np.swapaxes(rt.F_b, 1, 2) + rt.Q_b
    assert np.allclose(S_back, S[:-1], rtol=1e-8, atol=1e-10 * np.abs(S).max())
    # and the cross-covariance E[x_k x_{k+1}^T] = Sigma_k F^T
    assert np.allclose(rt.F_b @ S[1:], S[:-1] @ am.F.T, rtol=1e-8,
                       atol=1e-10 * np.abs(S).max())
    assert mu.shape == (K + 1, n)


def test_trajectory_coercion_and_readonly():
    t = Trajectory([1.0, 2.0, 3.0])
    assert t.states.shape == (3, 1) and t.K == 2 and t.n_x == 1
    with pytest.raises(ValueError):
        t.states[0, 0] = 5.0
    assert t.truncate(1).K == 1


def test_assumed_model_shape_checks():
    with pytest.raises(DimensionMismatch):
        AssumedModel(np.eye(2), np.eye(2), np.ones((1, 3)), [[1.0]], [0, 0], np.eye(2))


def test_validate_collects_violations():
    am = AssumedModel(np.eye(2), np.eye(2), np.ones((1, 2)), [[-1.0]], [0, 0], np.eye(2))
    tm = TrueMeasModel(np.ones((1, 2)), [[np.nan]])
    rep = validate_scenario(Trajectory(np.zeros((3, 3))), tm, am)
    kinds = {v.kind for v in rep.violations}
    assert not rep.ok
    assert {"DimensionMismatch", "NonFinite", "NotPsd"} <= kinds


def test_validate_accepts_psd_true_noise_and_q():
    am = AssumedModel(np.eye(2), np.zeros((2, 2)), np.ones((1, 2)), [[1.0]], [0, 0], np.eye(2))
    tm = TrueMeasModel(np.ones((1, 2)), [[0.0]])
    assert validate_scenario(Trajectory(np.zeros((3, 2))), tm, am).ok


@pytest.mark.parametrize("fam", [NoiseFamily("gaussian"), NoiseFamily("uniform"),
                                 NoiseFamily.student_t(5)])
def test_noise_families_are_standardized(fam):
    z = fam.standard(np.random.default_rng(0), (400_000,))
    assert abs(z.mean()) < 0.01
    assert z.var() == pytest.approx(1.0, abs=0.03)


def test_student_t_needs_finite_variance():
    with pytest.raises(ValueError):
        NoiseFamily.student_t(2)


def test_singular_pd_matrix_reported_as_not_pd():
    am = AssumedModel(np.eye(2), np.eye(2), np.ones((1, 2)), [[1.0]], [0, 0],
                      np.array([[1.0, 1.0], [1.0, 1.0]]))
    tm = TrueMeasModel(np.ones((1, 2)), [[1.0]])
    rep = validate_scenario(Trajectory(np.zeros((3, 2))), tm, am)
    assert [v.kind for v in rep.violations] == ["NotPd"]
