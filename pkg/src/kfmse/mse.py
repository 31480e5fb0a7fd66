"""Exact MSE of a mismatched Kalman filter and smoother on a fixed trajectory.

The estimator is affine in the measurements, so with ``y_k = H_bar x_k + v_k``
its error splits into a deterministic part (the estimate on noiseless
measurements minus the truth, ``b``) and a zero-mean part driven by the noise
(``e``, covariance ``C``).  Both obey the same forward / reversed-time
recursions as the filters themselves, and the smoothed quantities follow
from the information-form combination.  Nothing here touches simulated
measurements; the cost is O(K n_x^3).

Notation for the sequences below (all indexed by forward time k = 0..K):

=============  =====================================================
``*_fwd``      filtered, data 0..k
``*_bwd_pred`` reversed-time predicted, data k+1..K (prior at k = K)
``*_bwd``      reversed-time filtered, data k..K
``*_smooth``   smoothed, data 0..K
=============  =====================================================
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np
from numba import njit

from .kalman import (
    BackwardPass,
    ForwardPass,
    Information,
    backward_affine,
    backward_covariances,
    combine_vectors,
    forward_affine,
    forward_covariances,
    information_from,
    _riccati_sweep,
)
from .linalg import NotPositiveDefinite, mm, sandwich, sym_inplace
from .models import (
    AssumedModel,
    MarginalMoments,
    ReversedTimeModel,
    Trajectory,
    TrueMeasModel,
    reversed_time_model,
    validate_scenario,
)


class ScenarioError(ValueError):
    """The trajectory and models do not form a valid scenario."""


@dataclass(frozen=True)
class MismatchSequences:
    """Deterministic inputs of the bias recursions.

    ``w_tilde[k] = x_k - F x_{k-1}`` for k >= 1 (row 0 is zero and unused),
    ``v_tilde[k] = (H_bar - H) x_k``, ``b_prior[k] = mu_k - x_k`` and
    ``y_bar[k] = H_bar x_k``.
    """

    w_tilde: np.ndarray
    v_tilde: np.ndarray
    b_prior: np.ndarray
    y_bar: np.ndarray


@dataclass(frozen=True)
class EstimatorPasses:
    """Gains and covariances of every filter involved, measurement free."""

    moments: MarginalMoments
    reversed: ReversedTimeModel
    forward: ForwardPass
    backward: BackwardPass
    info: Information

    @property
    def K(self) -> int:
        return self.forward.K


@dataclass(frozen=True)
class MsePredictorState:
    b_fwd: np.ndarray
    b_bwd_pred: np.ndarray
    b_bwd: np.ndarray
    b_smooth: np.ndarray
    C_fwd: np.ndarray
    C_bwd_pred: np.ndarray
    C_bwd: np.ndarray
    C_smooth: np.ndarray


@dataclass(frozen=True)
class MseReport:
    """Per-step MSE matrices; ``mse = cov + bias bias^T``."""

    mse_filter: np.ndarray
    mse_smoother: np.ndarray
    bias_filter: np.ndarray
    bias_smoother: np.ndarray
    cov_filter: np.ndarray
    cov_smoother: np.ndarray
    assumed_P_filter: np.ndarray
    assumed_P_smoother: np.ndarray

    @property
    def K(self) -> int:
        return self.mse_filter.shape[0] - 1

    @property
    def n_x(self) -> int:
        return self.mse_filter.shape[1]

    def rmse_filter(self) -> np.ndarray:
        return np.sqrt(np.diagonal(self.mse_filter, axis1=1, axis2=2))

    def rmse_smoother(self) -> np.ndarray:
        return np.sqrt(np.diagonal(self.mse_smoother, axis1=1, axis2=2))


@dataclass(frozen=True)
class MseRow:
    """One step of a streamed report."""

    k: int
    mse_filter: np.ndarray
    mse_smoother: np.ndarray
    bias_filter: np.ndarray
    bias_smoother: np.ndarray
    cov_filter: np.ndarray
    cov_smoother: np.ndarray
    assumed_P_filter: np.ndarray
    assumed_P_smoother: np.ndarray


# --- building blocks --------------------------------------------------------


def estimator_passes(am: AssumedModel, K: int) -> EstimatorPasses:
    """Forward and reversed-time covariance sweeps plus combination weights."""
    rt = reversed_time_model(am, K)
    f = forward_covariances(am, K)
    b = backward_covariances(am, rt)
    info = information_from(f.P_filt, b.P_pred_b, rt.Sigma_inv)
    return EstimatorPasses(rt.moments, rt, f, b, info)


def mismatch_sequences(t: Trajectory, tm: TrueMeasModel, am: AssumedModel,
                       mm_: MarginalMoments) -> MismatchSequences:
    x = t.states
    w = np.zeros_like(x)
    w[1:] = x[1:] - x[:-1] @ am.F.T
    v = x @ (tm.H_bar - am.H).T
    return MismatchSequences(w, v, mm_.mu - x, x @ tm.H_bar.T)


def bias_forward(am: AssumedModel, f: ForwardPass, ms: MismatchSequences) -> np.ndarray:
    """Filtered bias b_{k|0:k}; only the gains of ``f`` are used."""
    _, b = forward_affine(am, f.gain, ms.b_prior[0], ms.v_tilde, -ms.w_tilde)
    return b


def bias_backward(am: AssumedModel, rt: ReversedTimeModel, b: BackwardPass,
                  ms: MismatchSequences) -> tuple[np.ndarray, np.ndarray]:
    """Reversed-time biases ``(b_{k|k+1:K}, b_{k|k:K})``, anchored at b_K."""
    bp = ms.b_prior
    d = np.zeros_like(bp)
    d[:-1] = bp[:-1] - np.einsum("kij,kj->ki", rt.F_b, bp[1:])
    return backward_affine(am, rt, b.gain_b, bp[-1], ms.v_tilde, d)


def bias_combine(info: Information, b_fwd, b_bwd_pred, b_prior) -> np.ndarray:
    return combine_vectors(info, b_fwd, b_bwd_pred, b_prior)


@njit(cache=True, nogil=True)
def _cov_sweep(Fs, H, G, R_bar, C0):
    """``C_filt = A C_pred A^T + G R_bar G^T`` with ``C_pred[i+1] = Fs[i] C_filt Fs[i]^T``."""
    steps = G.shape[0]
    n = C0.shape[0]
    C_pred = np.empty((steps, n, n))
    C_filt = np.empty((steps, n, n))
    eye = np.eye(n)
    C_pred[0] = C0
    for i in range(steps):
        A = eye - mm(G[i], H)
        C_filt[i] = sandwich(A, C_pred[i]) + sandwich(G[i], R_bar)
        sym_inplace(C_filt[i])
        if i + 1 < steps:
            C_pred[i + 1] = sandwich(Fs[i], C_filt[i])
    return C_pred, C_filt


def cov_forward(am: AssumedModel, f: ForwardPass, R_bar, C0=None) -> np.ndarray:
    """Filtered noise covariance C_{k|0:k}.  No +Q: the trajectory is fixed."""
    steps = f.gain.shape[0]
    Fs = np.ascontiguousarray(np.broadcast_to(am.F, (steps - 1, am.n_x, am.n_x)))
    C0 = np.zeros((am.n_x, am.n_x)) if C0 is None else np.ascontiguousarray(C0)
    _, C = _cov_sweep(Fs, am.H, f.gain, np.ascontiguousarray(R_bar, dtype=float), C0)
    return C


def cov_backward(am: AssumedModel, rt: ReversedTimeModel, b: BackwardPass,
                 R_bar) -> tuple[np.ndarray, np.ndarray]:
    """Reversed-time ``(C_{k|k+1:K}, C_{k|k:K})``; C_{K|K+1:K} = 0."""
    C_pred, C_filt = _cov_sweep(
        np.ascontiguousarray(rt.F_b[::-1]), am.H, np.ascontiguousarray(b.gain_b[::-1]),
        np.ascontiguousarray(R_bar, dtype=float), np.zeros((am.n_x, am.n_x)))
    return C_pred[::-1], C_filt[::-1]


def cov_combine(info: Information, C_fwd, C_bwd_pred) -> np.ndarray:
    """Smoothed noise covariance; forward and backward errors are independent."""
    inner = info.fwd @ C_fwd @ info.fwd + info.bwd @ C_bwd_pred @ info.bwd
    C = info.P_smooth @ inner @ info.P_smooth
    return 0.5 * (C + np.swapaxes(C, -1, -2))


def error_propagate(am: AssumedModel, passes: EstimatorPasses, noise):
    """Noise-driven error sequences for one realization (or a batch).

    Returns ``(e_fwd, e_bwd_pred, e_bwd, e_smooth)``.  Only used to pin the
    covariance recursions: C is the covariance of these errors.
    """
    noise = np.asarray(noise, dtype=float)
    lead = noise.shape[1:-1] if noise.ndim == 3 else ()
    zero = np.zeros(lead + (am.n_x,))
    _, e_f = forward_affine(am, passes.forward.gain, zero, noise)
    e_bp, e_b = backward_affine(am, passes.reversed, passes.backward.gain_b, zero, noise)
    e_s = combine_vectors(passes.info, e_f, e_bp)
    return e_f, e_bp, e_b, e_s


# --- orchestration ----------------------------------------------------------


def _check(t, tm, am):
    rep = validate_scenario(t, tm, am)
    if not rep.ok:
        raise ScenarioError(str(rep))


def predictor_state(t: Trajectory, tm: TrueMeasModel, am: AssumedModel,
                    passes: EstimatorPasses | None = None,
                    ) -> tuple[MsePredictorState, EstimatorPasses]:
    _check(t, tm, am)
    p = passes if passes is not None else estimator_passes(am, t.K)
    ms = mismatch_sequences(t, tm, am, p.moments)
    b_f = bias_forward(am, p.forward, ms)
    b_bp, b_b = bias_backward(am, p.reversed, p.backward, ms)
    b_s = bias_combine(p.info, b_f, b_bp, ms.b_prior)
    C_f = cov_forward(am, p.forward, tm.R_bar)
    C_bp, C_b = cov_backward(am, p.reversed, p.backward, tm.R_bar)
    C_s = cov_combine(p.info, C_f, C_bp)
    return MsePredictorState(b_f, b_bp, b_b, b_s, C_f, C_bp, C_b, C_s), p


def _outer(b):
    return b[..., :, None] * b[..., None, :]


def predict_mse(t: Trajectory, tm: TrueMeasModel, am: AssumedModel) -> MseReport:
    """Analytical filter and smoother MSE matrices at every step."""
    st, p = predictor_state(t, tm, am)
    return MseReport(
        mse_filter=st.C_fwd + _outer(st.b_fwd),
        mse_smoother=st.C_smooth + _outer(st.b_smooth),
        bias_filter=st.b_fwd,
        bias_smoother=st.b_smooth,
        cov_filter=st.C_fwd,
        cov_smoother=st.C_smooth,
        assumed_P_filter=p.forward.P_filt,
        assumed_P_smoother=p.info.P_smooth,
    )


def iter_mse(t: Trajectory, tm: TrueMeasModel, am: AssumedModel,
             chunk: int = 512) -> Iterator[MseRow]:
    """Stream :class:`MseRow` objects for k = 0..K.

    The reversed-time sequences (P, b, C and the prior moments) are kept in
    memory; forward quantities and the combination are produced chunk by
    chunk, so only O(chunk n_x^2) forward state is alive at a time.
    """
    _check(t, tm, am)
    K = t.K
    rt = reversed_time_model(am, K)
    mm_ = rt.moments
    bwd = backward_covariances(am, rt)
    ms = mismatch_sequences(t, tm, am, mm_)
    b_bp, _ = bias_backward(am, rt, bwd, ms)
    C_bp, _ = cov_backward(am, rt, bwd, tm.R_bar)
    R_bar = np.ascontiguousarray(tm.R_bar, dtype=float)

    P0 = am.Sigma0
    b0 = ms.b_prior[0]
    C0 = np.zeros((am.n_x, am.n_x))
    start = 0
    while start <= K:
        # overlap by one step so the next chunk starts from this chunk's
        # prediction, computed by the same kernel as the unchunked pass
        stop = min(start + chunk, K)
        n_steps = stop - start
        Fs = np.ascontiguousarray(np.broadcast_to(am.F, (n_steps, am.n_x, am.n_x)))
        Qs = np.ascontiguousarray(np.broadcast_to(am.Q, (n_steps, am.n_x, am.n_x)))
        P_pred, P_filt, S, G, bad = _riccati_sweep(Fs, Qs, am.H, am.R, np.ascontiguousarray(P0))
        if bad >= 0:
            raise NotPositiveDefinite(f"innovation covariance S_{start + bad} is not PD")
        sl = slice(start, stop + 1)
        b_pred, b_f = forward_affine(am, G, b0, ms.v_tilde[sl], -ms.w_tilde[sl])
        C_pred, C_f = _cov_sweep(Fs, am.H, G, R_bar, np.ascontiguousarray(C0))
        info = information_from(P_filt, bwd.P_pred_b[sl], rt.Sigma_inv[sl])
        b_s = combine_vectors(info, b_f, b_bp[sl], ms.b_prior[sl])
        C_s = cov_combine(info, C_f, C_bp[sl])
        last = n_steps + 1 if stop == K else n_steps
        for i in range(last):
            yield MseRow(
                k=start + i,
                mse_filter=C_f[i] + np.outer(b_f[i], b_f[i]),
                mse_smoother=C_s[i] + np.outer(b_s[i], b_s[i]),
                bias_filter=b_f[i], bias_smoother=b_s[i],
                cov_filter=C_f[i], cov_smoother=C_s[i],
                assumed_P_filter=P_filt[i], assumed_P_smoother=info.P_smooth[i],
            )
        if stop == K:
            break
        P0, b0, C0 = P_pred[-1], b_pred[-1], C_pred[-1]
        start = stop
