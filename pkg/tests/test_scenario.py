import numpy as np
import pytest

from kfmse.scenario import (
    BENCH_K,
    CvScenario,
    ManeuverSpec,
    Segment,
    benchmark_maneuvers,
    build_cv_models,
    cv_process_noise,
    cv_transition,
    generate_trajectory,
)


def test_cv_matrices():
    F = cv_transition(0.5)
    assert F.shape == (4, 4)
    assert np.allclose(F @ [0, 0, 1, 2], [0.5, 1.0, 1, 2])
    Q = cv_process_noise(1.0, 3.0)
    assert Q[0, 0] == pytest.approx(1.0) and Q[0, 2] == pytest.approx(1.5)
    assert Q[2, 2] == pytest.approx(3.0) and np.all(np.linalg.eigvalsh(Q) > 0)


def test_models_carry_mismatch():
    am, tm = build_cv_models(CvScenario())
    assert np.allclose(am.H, 0.99 * tm.H_bar)
    assert np.allclose(np.diag(tm.R_bar), 2000) and np.allclose(np.diag(am.R), 1800)
    assert am.mu0.tolist() == [75000, 20000, -200, -180]


def test_cv_scenario_rejects_bad_values():
    with pytest.raises(ValueError):
        CvScenario(T=0)
    with pytest.raises(ValueError):
        CvScenario(sigma2_true=(0.0, 1.0))


def test_straight_leg_is_exact_cv():
    spec = ManeuverSpec((Segment(1.0),), (0.0, 0.0, 3.0, -4.0))
    t = generate_trajectory(spec, 0.1)
    F = cv_transition(0.1)
    assert t.K == 10
    assert np.allclose(t.states[1:], t.states[:-1] @ F.T, atol=1e-12)


def test_turn_preserves_speed():
    spec = ManeuverSpec((Segment(10.0, "ct", rate=0.2),), (0.0, 0.0, 100.0, 0.0))
    v = generate_trajectory(spec, 0.05).states[:, 2:]
    assert np.allclose(np.hypot(v[:, 0], v[:, 1]), 100.0)
    # heading after 10 s at 0.2 rad/s
    assert np.arctan2(v[-1, 1], v[-1, 0]) == pytest.approx(2.0)


def test_acceleration_leg():
    spec = ManeuverSpec((Segment(2.0, "ca", accel=(1.0, -2.0)),), (0.0, 0.0, 0.0, 0.0))
    x = generate_trajectory(spec, 0.5).states[-1]
    assert np.allclose(x, [2.0, -4.0, 2.0, -4.0])


def test_benchmark_length_and_speed():
    t = generate_trajectory(benchmark_maneuvers(), 0.05)
    assert t.K == BENCH_K
    speed = np.hypot(t.states[:, 2], t.states[:, 3])
    assert 150 < speed.min() and speed.max() < 350
    assert generate_trajectory(benchmark_maneuvers(500), 0.05).K == 500


def test_segment_validation():
    with pytest.raises(ValueError):
        Segment(1.0, "zigzag")
    with pytest.raises(ValueError):
        Segment(0.0)
