"""Monte Carlo reference: simulate measurements on the fixed trajectory, run
the mismatched filter and RTS smoother, and average the squared errors.

Runs are grouped in fixed blocks of ``BLOCK`` consecutive run indices.  Each
run draws from its own generator seeded by ``(seed, run_index)``, and block
statistics are merged in block order, so results do not depend on how many
worker threads are used.
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .kalman import _rts_states, forward_affine, forward_covariances, rts_smooth
from .linalg import cholesky
from .models import AssumedModel, NoiseFamily, Trajectory, TrueMeasModel, validate_scenario
from .mse import MseReport, ScenarioError

log = logging.getLogger(__name__)

BLOCK = 256
#: Floor on standard errors when forming z-scores.
SE_FLOOR = 1e-15


@dataclass(frozen=True)
class McConfig:
    n_runs: int = 10_000
    seed: int = 0
    noise_family: NoiseFamily | None = None  # None: use the true model's family
    parallel_width: int = 1

    def __post_init__(self):
        if self.n_runs < 1:
            raise ValueError("n_runs must be at least 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.parallel_width < 1:
            raise ValueError("parallel_width must be at least 1")


@dataclass(frozen=True)
class EmpiricalMse:
    mean_sq_err_filter: np.ndarray     # (K+1, n_x, n_x)
    mean_sq_err_smoother: np.ndarray
    std_err_diag_filter: np.ndarray    # (K+1, n_x), standard error of the diagonal
    std_err_diag_smoother: np.ndarray
    mean_err_filter: np.ndarray        # (K+1, n_x)
    mean_err_smoother: np.ndarray
    n_runs: int

    @property
    def K(self) -> int:
        return self.mean_sq_err_filter.shape[0] - 1

    def rmse_filter(self) -> np.ndarray:
        return np.sqrt(np.diagonal(self.mean_sq_err_filter, axis1=1, axis2=2))

    def rmse_smoother(self) -> np.ndarray:
        return np.sqrt(np.diagonal(self.mean_sq_err_smoother, axis1=1, axis2=2))


def run_generator(seed: int, run_index: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(run_index)])


def sample_measurements(t: Trajectory, tm: TrueMeasModel, rng: np.random.Generator,
                        family: NoiseFamily | None = None) -> np.ndarray:
    """One measurement sequence ``H_bar x_k + v_k`` with cov(v_k) = R_bar."""
    L = cholesky(tm.R_bar)
    fam = family or tm.noise_family
    z = fam.standard(rng, (t.K + 1, tm.n_y))
    return t.states @ tm.H_bar.T + z @ L.T


def default_parallel_width() -> int:
    cap = os.environ.get("MSE_BENCH_THREADS")
    n = os.cpu_count() or 1
    if cap:
        n = min(n, max(1, int(cap)))
    return n


class _Estimators:
    """Measurement-independent parts of the filter/smoother, computed once."""

    def __init__(self, am: AssumedModel, K: int):
        self.am = am
        self.fwd = forward_covariances(am, K)
        self.rts = rts_smooth(am, self.fwd)

    def errors(self, t: Trajectory, y: np.ndarray):
        """Filter and smoother errors for a batch ``y`` of shape (K+1, N, n_y)."""
        xp, xf = forward_affine(self.am, self.fwd.gain, self.am.mu0, y)
        xs = _rts_states(self.rts.gain, xf, xp)
        x = t.states[:, None, :]
        return xf - x, xs - x


def simulate_errors(t: Trajectory, tm: TrueMeasModel, am: AssumedModel, cfg: McConfig,
                    runs: range | None = None, _est: _Estimators | None = None):
    """Per-run filter and smoother errors, each (K+1, len(runs), n_x)."""
    runs = range(cfg.n_runs) if runs is None else runs
    est = _est or _Estimators(am, t.K)
    fam = cfg.noise_family or tm.noise_family
    y = np.stack([sample_measurements(t, tm, run_generator(cfg.seed, r), fam) for r in runs],
                 axis=1)
    return est.errors(t, y)


@dataclass
class _Moments:
    """Count, mean and centered sum of squares, mergeable across blocks."""

    n: int
    mean: np.ndarray
    m2: np.ndarray

    @classmethod
    def of(cls, samples: np.ndarray) -> "_Moments":
        # samples: (N, ...)
        mean = samples.mean(axis=0)
        return cls(samples.shape[0], mean, ((samples - mean) ** 2).sum(axis=0))

    def merge(self, other: "_Moments") -> "_Moments":
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.n / n)
        m2 = self.m2 + other.m2 + delta**2 * (self.n * other.n / n)
        return _Moments(n, mean, m2)


def _block_stats(errs: np.ndarray):
    """Mergeable statistics of one block of errors (K+1, B, n_x)."""
    e = np.moveaxis(errs, 1, 0)                  # (B, K+1, n)
    outer = e[..., :, None] * e[..., None, :]    # (B, K+1, n, n)
    return _Moments.of(outer), _Moments.of(e)


def empirical_mse(t: Trajectory, tm: TrueMeasModel, am: AssumedModel,
                  cfg: McConfig) -> EmpiricalMse:
    """Empirical filter/smoother MSE with standard errors of the diagonal."""
    rep = validate_scenario(t, tm, am)
    if not rep.ok:
        raise ScenarioError(str(rep))
    cholesky(tm.R_bar)  # sampling needs a PD R_bar; fail before spawning work
    est = _Estimators(am, t.K)
    blocks = [range(s, min(s + BLOCK, cfg.n_runs)) for s in range(0, cfg.n_runs, BLOCK)]

    def work(runs):
        ef, es = simulate_errors(t, tm, am, cfg, runs, est)
        return _block_stats(ef), _block_stats(es)

    width = min(cfg.parallel_width, len(blocks))
    if width > 1:
        with ThreadPoolExecutor(width) as pool:
            parts = list(pool.map(work, blocks))
    else:
        parts = [work(b) for b in blocks]

    (fo, fe), (so, se) = parts[0]
    for (fo2, fe2), (so2, se2) in parts[1:]:
        fo, fe, so, se = fo.merge(fo2), fe.merge(fe2), so.merge(so2), se.merge(se2)

    def diag_se(mo: _Moments) -> np.ndarray:
        n = mo.n
        var = np.diagonal(mo.m2, axis1=-2, axis2=-1) / max(n - 1, 1)
        return np.sqrt(var / n)

    def sym(a):
        return 0.5 * (a + np.swapaxes(a, -1, -2))

    return EmpiricalMse(sym(fo.mean), sym(so.mean), diag_se(fo), diag_se(so),
                        fe.mean, se.mean, cfg.n_runs)


class ShapeMismatch(ValueError):
    pass


@dataclass(frozen=True)
class ComparisonReport:
    """Analytical vs empirical MSE diagonals, per step and state component."""

    rel_diff_filter: np.ndarray     # (K+1, n_x), (analytical - empirical) / empirical
    rel_diff_smoother: np.ndarray
    z_filter: np.ndarray            # (analytical - empirical) / standard error
    z_smoother: np.ndarray
    rmse_rel_diff_filter: np.ndarray
    rmse_rel_diff_smoother: np.ndarray
    z_threshold: float

    @property
    def max_abs_z(self) -> float:
        return float(max(np.max(np.abs(self.z_filter)), np.max(np.abs(self.z_smoother))))

    @property
    def passed(self) -> bool:
        return self.max_abs_z <= self.z_threshold

    def fraction_within(self, z: float = 3.0) -> tuple[float, float]:
        """Fraction of (step, component) pairs with |z| <= ``z``: (filter, smoother)."""
        return (float(np.mean(np.abs(self.z_filter) <= z)),
                float(np.mean(np.abs(self.z_smoother) <= z)))


def _diag(a):
    return np.diagonal(a, axis1=-2, axis2=-1)


def compare(analytical: MseReport, empirical: EmpiricalMse,
            z_threshold: float = 4.0) -> ComparisonReport:
    if analytical.mse_filter.shape != empirical.mean_sq_err_filter.shape:
        raise ShapeMismatch(
            f"analytical {analytical.mse_filter.shape} vs empirical "
            f"{empirical.mean_sq_err_filter.shape}")

    def rel(a, e):
        denom = np.where(e != 0, np.abs(e), 1.0)
        return np.where((a == e), 0.0, (a - e) / denom)

    af, as_ = _diag(analytical.mse_filter), _diag(analytical.mse_smoother)
    ef, es = _diag(empirical.mean_sq_err_filter), _diag(empirical.mean_sq_err_smoother)
    zf = (af - ef) / np.maximum(empirical.std_err_diag_filter, SE_FLOOR)
    zs = (as_ - es) / np.maximum(empirical.std_err_diag_smoother, SE_FLOOR)
    return ComparisonReport(
        rel(af, ef), rel(as_, es), zf, zs,
        rel(np.sqrt(af), np.sqrt(ef)), rel(np.sqrt(as_), np.sqrt(es)), z_threshold)


def as_empirical(report: MseReport) -> EmpiricalMse:
    """Wrap an analytical report as a zero-variance 'empirical' one."""
    n = report.mse_filter.shape[:2]
    return EmpiricalMse(report.mse_filter, report.mse_smoother, np.zeros(n), np.zeros(n),
                        report.bias_filter, report.bias_smoother, 0)
