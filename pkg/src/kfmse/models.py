"""Trajectory, true/assumed models, marginal moments and the reversed-time model."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .linalg import (
    NotPositiveDefinite,
    batch_spd_inverse,
    chol_factor,
    first_non_psd,
    is_psd,
    is_symmetric,
    sandwich,
    sym_inplace,
)


class SchurNegative(NotPositiveDefinite):
    """A reversed-time process noise covariance failed the PSD check."""


class DimensionMismatch(ValueError):
    pass


def _mat(a, name: str) -> np.ndarray:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.ndim != 2:
        raise DimensionMismatch(f"{name} must be a matrix, got shape {a.shape}")
    return np.ascontiguousarray(a)


def _vec(a, name: str) -> np.ndarray:
    a = np.atleast_1d(np.asarray(a, dtype=float))
    if a.ndim != 1:
        raise DimensionMismatch(f"{name} must be a vector, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class Trajectory:
    """Fixed true state sequence ``x_0 ... x_K``, one row per step."""

    states: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.states, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        if s.ndim != 2 or s.shape[0] < 1 or s.shape[1] < 1:
            raise DimensionMismatch(f"trajectory must be (K+1, n_x), got {s.shape}")
        s = np.ascontiguousarray(s)
        s.setflags(write=False)
        object.__setattr__(self, "states", s)

    @property
    def K(self) -> int:
        return self.states.shape[0] - 1

    @property
    def n_x(self) -> int:
        return self.states.shape[1]

    def __len__(self) -> int:
        return self.states.shape[0]

    def truncate(self, K: int) -> "Trajectory":
        if not 0 <= K <= self.K:
            raise ValueError(f"cannot truncate a K={self.K} trajectory to K={K}")
        return Trajectory(self.states[: K + 1])


@dataclass(frozen=True)
class NoiseFamily:
    """Shape of the true measurement noise; always rescaled to covariance R_bar."""

    kind: str = "gaussian"
    dof: float | None = None

    def __post_init__(self):
        if self.kind not in ("gaussian", "uniform", "student_t"):
            raise ValueError(f"unknown noise family {self.kind!r}")
        if self.kind == "student_t" and (self.dof is None or not self.dof > 2):
            raise ValueError("student_t noise needs dof > 2 for a finite covariance")

    @classmethod
    def student_t(cls, dof: float) -> "NoiseFamily":
        return cls("student_t", float(dof))

    def standard(self, rng: np.random.Generator, shape) -> np.ndarray:
        """Zero-mean, unit-variance iid draws."""
        if self.kind == "gaussian":
            return rng.standard_normal(shape)
        if self.kind == "uniform":
            r = np.sqrt(3.0)
            return rng.uniform(-r, r, shape)
        return rng.standard_t(self.dof, shape) * np.sqrt((self.dof - 2.0) / self.dof)

    def label(self) -> str:
        return f"student_t({self.dof:g})" if self.kind == "student_t" else self.kind


GAUSSIAN = NoiseFamily()
UNIFORM = NoiseFamily("uniform")


@dataclass(frozen=True)
class TrueMeasModel:
    H_bar: np.ndarray
    R_bar: np.ndarray
    noise_family: NoiseFamily = GAUSSIAN

    def __post_init__(self):
        object.__setattr__(self, "H_bar", _mat(self.H_bar, "H_bar"))
        object.__setattr__(self, "R_bar", _mat(self.R_bar, "R_bar"))

    @property
    def n_y(self) -> int:
        return self.H_bar.shape[0]


@dataclass(frozen=True)
class AssumedModel:
    """Linear-Gaussian model the estimator believes in."""

    F: np.ndarray
    Q: np.ndarray
    H: np.ndarray
    R: np.ndarray
    mu0: np.ndarray
    Sigma0: np.ndarray

    def __post_init__(self):
        for name in ("F", "Q", "H", "R", "Sigma0"):
            object.__setattr__(self, name, _mat(getattr(self, name), name))
        object.__setattr__(self, "mu0", _vec(self.mu0, "mu0"))
        n_x, n_y = self.n_x, self.n_y
        shapes = {
            "F": (n_x, n_x), "Q": (n_x, n_x), "H": (n_y, n_x),
            "R": (n_y, n_y), "Sigma0": (n_x, n_x),
        }
        for name, shape in shapes.items():
            if getattr(self, name).shape != shape:
                raise DimensionMismatch(
                    f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        if self.mu0.shape != (n_x,):
            raise DimensionMismatch(f"mu0 has length {self.mu0.size}, expected {n_x}")

    @property
    def n_x(self) -> int:
        return self.F.shape[0]

    @property
    def n_y(self) -> int:
        return self.H.shape[0]

    def replace(self, **changes) -> "AssumedModel":
        kw = {k: getattr(self, k) for k in ("F", "Q", "H", "R", "mu0", "Sigma0")}
        kw.update(changes)
        return AssumedModel(**kw)


@dataclass(frozen=True)
class MarginalMoments:
    mu: np.ndarray     # (K+1, n_x)
    Sigma: np.ndarray  # (K+1, n_x, n_x)

    @property
    def K(self) -> int:
        return self.mu.shape[0] - 1


@dataclass(frozen=True)
class ReversedTimeModel:
    """Backward Markov model; ``F_b[k]``/``Q_b[k]`` map step k+1 to step k."""

    F_b: np.ndarray  # (K, n_x, n_x)
    Q_b: np.ndarray  # (K, n_x, n_x)
    moments: MarginalMoments
    Sigma_inv: np.ndarray = field(repr=False)  # (K+1, n_x, n_x)


@njit(cache=True)
def _moment_recursion(F, Q, mu0, Sigma0, K):
    n = F.shape[0]
    mu = np.empty((K + 1, n))
    out = np.empty((K + 1, n, n))
    mu[0] = mu0
    out[0] = Sigma0
    L = np.zeros((n, n))
    bad = -1
    if chol_factor(out[0], L) >= 0:
        bad = 0
    for k in range(1, K + 1):
        for i in range(n):
            s = 0.0
            for j in range(n):
                s += F[i, j] * mu[k - 1, j]
            mu[k, i] = s
        out[k] = sandwich(F, out[k - 1]) + Q
        sym_inplace(out[k])
        if bad < 0 and chol_factor(out[k], L) >= 0:
            bad = k
    return mu, out, bad


def marginal_moments(m: AssumedModel, K: int) -> MarginalMoments:
    """Prior means and covariances of the assumed process at steps 0..K."""
    if K < 0:
        raise ValueError("K must be non-negative")
    Sigma0 = np.ascontiguousarray(0.5 * (m.Sigma0 + m.Sigma0.T))
    mu, Sigma, bad = _moment_recursion(m.F, m.Q, m.mu0, Sigma0, K)
    if bad >= 0:
        raise NotPositiveDefinite(
            f"prior covariance Sigma_{bad} is not positive definite; "
            "the reversed-time model needs every Sigma_k invertible")
    return MarginalMoments(mu, Sigma)


def reversed_time_model(m: AssumedModel, K: int, moments: MarginalMoments | None = None,
                        check: bool = True) -> ReversedTimeModel:
    """Reversed-time transition and noise covariances for steps K..0.

    ``F_b[k] = Sigma_k F^T Sigma_{k+1}^{-1}`` and
    ``Q_b[k] = Sigma_k - F_b[k] F Sigma_k`` (a Schur complement, so PSD).
    """
    mm = moments if moments is not None else marginal_moments(m, K)
    Sigma = mm.Sigma
    Sinv = batch_spd_inverse(Sigma)
    Sk = Sigma[:-1]
    F_b = Sk @ m.F.T @ Sinv[1:]
    Q_b = Sk - F_b @ m.F @ Sk
    Q_b = 0.5 * (Q_b + np.swapaxes(Q_b, -1, -2))
    if check:
        bad = first_non_psd(np.ascontiguousarray(Q_b), 1e-9)
        if bad >= 0:
            raise SchurNegative(f"reversed-time noise covariance at step {bad} is not PSD")
    return ReversedTimeModel(F_b, Q_b, mm, Sinv)


@dataclass
class Violation:
    kind: str
    message: str


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, kind: str, message: str) -> None:
        self.violations.append(Violation(kind, message))

    def __str__(self) -> str:
        if self.ok:
            return "scenario OK"
        return "\n".join(f"{v.kind}: {v.message}" for v in self.violations)


def validate_scenario(t: Trajectory, tm: TrueMeasModel, am: AssumedModel) -> ValidationReport:
    """Collect every dimension, finiteness and definiteness problem."""
    rep = ValidationReport()
    n_x = t.n_x
    arrays = {
        "trajectory": t.states, "H_bar": tm.H_bar, "R_bar": tm.R_bar, "F": am.F,
        "Q": am.Q, "H": am.H, "R": am.R, "mu0": am.mu0, "Sigma0": am.Sigma0,
    }
    for name, a in arrays.items():
        if not np.all(np.isfinite(a)):
            rep.add("NonFinite", f"{name} has non-finite entries")
    if am.n_x != n_x:
        rep.add("DimensionMismatch", f"assumed model has n_x={am.n_x}, trajectory has {n_x}")
    if tm.H_bar.shape[1] != n_x:
        rep.add("DimensionMismatch",
                f"H_bar has {tm.H_bar.shape[1]} columns, trajectory has n_x={n_x}")
    if tm.H_bar.shape[0] != am.n_y:
        rep.add("DimensionMismatch",
                f"H_bar has {tm.H_bar.shape[0]} rows, assumed H has {am.n_y}")
    if tm.R_bar.shape != (tm.n_y, tm.n_y):
        rep.add("DimensionMismatch", f"R_bar has shape {tm.R_bar.shape}, expected "
                f"({tm.n_y}, {tm.n_y})")

    def definiteness(name, a, strict):
        if a.shape[0] != a.shape[1] or not np.all(np.isfinite(a)):
            return
        if not is_symmetric(a):
            rep.add("NotSymmetric", f"{name} is not symmetric")
        if not is_psd(a):
            rep.add("NotPsd", f"{name} is not positive semi-definite")
        elif strict:
            L = np.zeros_like(a)
            if chol_factor(np.ascontiguousarray(0.5 * (a + a.T)), L) >= 0:
                rep.add("NotPd", f"{name} is not positive definite")

    definiteness("R_bar", tm.R_bar, False)
    definiteness("Q", am.Q, False)
    definiteness("R", am.R, True)
    definiteness("Sigma0", am.Sigma0, True)
    return rep
