"""Constant-velocity tracking scenario and a deterministic maneuver generator."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .models import AssumedModel, NoiseFamily, Trajectory, TrueMeasModel, GAUSSIAN

# Defaults of the 2D tracking benchmark: positions then velocities.
BENCH_T = 0.05
BENCH_K = 3821
BENCH_MU0 = (75000.0, 20000.0, -200.0, -180.0)
BENCH_SIGMA0 = (2000.0, 2000.0, 100.0, 100.0)


@dataclass
class CvScenario:
    """Constant-velocity model with a scaled (mismatched) measurement matrix.

    Units: T in s, ``sigma_a2`` in m^2/s^3, variances in m^2.
    """

    T: float = BENCH_T
    K: int = BENCH_K
    sigma_a2: float = 10.0
    eta: float = 0.99
    sigma2_true: tuple[float, float] = (2000.0, 2000.0)
    sigma2_assumed: tuple[float, float] = (1800.0, 1800.0)
    mu0: tuple[float, ...] = BENCH_MU0
    Sigma0: np.ndarray = field(default_factory=lambda: np.diag(BENCH_SIGMA0))
    noise_family: NoiseFamily = GAUSSIAN

    def __post_init__(self):
        self.Sigma0 = np.asarray(self.Sigma0, dtype=float)
        if self.Sigma0.ndim == 1:
            self.Sigma0 = np.diag(self.Sigma0)
        if not self.T > 0:
            raise ValueError("T must be positive")
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if min(*self.sigma2_true, *self.sigma2_assumed, self.sigma_a2) <= 0:
            raise ValueError("variances must be positive")


def cv_transition(T: float) -> np.ndarray:
    I2 = np.eye(2)
    return np.block([[I2, T * I2], [np.zeros((2, 2)), I2]])


def cv_process_noise(T: float, sigma_a2: float) -> np.ndarray:
    I2 = np.eye(2)
    return sigma_a2 * np.block([[T**3 / 3 * I2, T**2 / 2 * I2], [T**2 / 2 * I2, T * I2]])


def build_cv_models(s: CvScenario) -> tuple[AssumedModel, TrueMeasModel]:
    H_bar = np.hstack([np.eye(2), np.zeros((2, 2))])
    tm = TrueMeasModel(H_bar, np.diag(s.sigma2_true), s.noise_family)
    am = AssumedModel(
        F=cv_transition(s.T),
        Q=cv_process_noise(s.T, s.sigma_a2),
        H=s.eta * H_bar,
        R=np.diag(s.sigma2_assumed),
        mu0=np.asarray(s.mu0, dtype=float),
        Sigma0=s.Sigma0,
    )
    return am, tm


# --- maneuvering trajectories ----------------------------------------------


@dataclass(frozen=True)
class Segment:
    """One leg of a maneuver.

    ``mode`` is ``"cv"``, ``"ct"`` (coordinated turn at ``rate`` rad/s,
    positive = counter-clockwise) or ``"ca"`` (constant acceleration
    ``accel`` = (ax, ay) in m/s^2).
    """

    duration: float
    mode: str = "cv"
    rate: float = 0.0
    accel: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.mode not in ("cv", "ct", "ca"):
            raise ValueError(f"unknown segment mode {self.mode!r}")
        if not self.duration > 0:
            raise ValueError("segment duration must be positive")


@dataclass(frozen=True)
class ManeuverSpec:
    segments: tuple[Segment, ...]
    initial_state: tuple[float, float, float, float]

    def steps(self, T: float) -> list[int]:
        return [int(round(seg.duration / T)) for seg in self.segments]


def _ct_step(p, v, w, dt):
    """Exact coordinated-turn propagation of position and velocity."""
    if w == 0.0:
        return p + v * dt, v
    s, c = np.sin(w * dt), np.cos(w * dt)
    a, b = s / w, (1.0 - c) / w
    p_new = p + np.array([a * v[0] - b * v[1], b * v[0] + a * v[1]])
    v_new = np.array([c * v[0] - s * v[1], s * v[0] + c * v[1]])
    return p_new, v_new


def generate_trajectory(spec: ManeuverSpec, T: float) -> Trajectory:
    """Integrate the maneuver legs at period ``T`` without discretization error.

    Each leg is propagated in closed form from its own start state, so
    round-off does not accumulate within a leg.
    """
    counts = spec.steps(T)
    if sum(counts) < 1:
        raise ValueError("maneuver spec yields no steps at this sampling period")
    x0 = np.asarray(spec.initial_state, dtype=float)
    if x0.shape != (4,):
        raise ValueError("initial_state must be [px, py, vx, vy]")
    states = [x0]
    p0, v0 = x0[:2], x0[2:]
    for seg, n in zip(spec.segments, counts):
        for i in range(1, n + 1):
            t = i * T
            if seg.mode == "cv":
                p, v = p0 + v0 * t, v0
            elif seg.mode == "ct":
                p, v = _ct_step(p0, v0, seg.rate, t)
            else:
                a = np.asarray(seg.accel, dtype=float)
                p, v = p0 + v0 * t + 0.5 * a * t * t, v0 + a * t
            states.append(np.concatenate([p, v]))
        p0, v0 = states[-1][:2], states[-1][2:]
    return Trajectory(np.array(states))


def benchmark_maneuvers(K: int = BENCH_K, T: float = BENCH_T,
                        initial_state=(75040.0, 19970.0, -210.0, -175.0)) -> ManeuverSpec:
    """Synthetic stand-in for a long 2D tracking benchmark trajectory.

    Straight legs joined by two turns and a speed change, at roughly
    200-300 m/s.  The legs are fixed fractions of ``K`` steps, so any K gives
    the same shape.  This is an approximation of a typical benchmark, not a
    reproduction of any published data set.
    """
    legs = [
        (0.20, Segment(1.0, "cv")),
        (0.15, Segment(1.0, "ct", rate=0.05)),
        (0.15, Segment(1.0, "cv")),
        (0.15, Segment(1.0, "ct", rate=-0.06)),
        (0.10, Segment(1.0, "ca", accel=(2.0, -1.5))),
        (0.25, Segment(1.0, "cv")),
    ]
    bounds = np.round(np.cumsum([0.0] + [f for f, _ in legs]) * K).astype(int)
    bounds[-1] = K
    segments = []
    for (_, seg), n in zip(legs, np.diff(bounds)):
        if n > 0:
            segments.append(Segment(n * T, seg.mode, seg.rate, seg.accel))
    return ManeuverSpec(tuple(segments), tuple(float(v) for v in initial_state))
