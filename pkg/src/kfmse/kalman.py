"""Forward Kalman filter, RTS smoother, reversed-time filter and the modified
two-filter smoother.

Every pass is split into a covariance sweep (gains, innovation covariances;
measurement independent) and an affine sweep over state-like vectors.  The
affine sweep is shared by the state estimates here and by the bias/error
recursions in :mod:`kfmse.mse`, and it accepts a batch axis so that many
measurement realizations are filtered at once.

Array conventions: time is the leading axis.  State estimates have shape
``(K+1, n_x)`` for a single realization or ``(K+1, N, n_x)`` for a batch.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .linalg import (
    NotPositiveDefinite,
    batch_spd_inverse,
    chol_factor,
    chol_solve,
    mm,
    mmt,
    sandwich,
    sym_inplace,
)
from .models import AssumedModel, MarginalMoments, ReversedTimeModel, reversed_time_model


class InformationNotPd(NotPositiveDefinite):
    """The summed information matrix of the two-filter smoother is not PD."""


# --- compiled sweeps ----------------------------------------------------


@njit(cache=True, nogil=True)
def _riccati_sweep(Fs, Qs, H, R, P0):
    """Covariance half of a Kalman filter over ``len(Fs) + 1`` steps.

    Step i updates the prediction ``P_pred[i]``; the next prediction is
    ``Fs[i] P_filt[i] Fs[i]^T + Qs[i]``.  Joseph-form update throughout.
    Returns the arrays and the index of the first non-PD innovation
    covariance (-1 if none).
    """
    steps = Fs.shape[0] + 1
    n = P0.shape[0]
    m = H.shape[0]
    P_pred = np.empty((steps, n, n))
    P_filt = np.empty((steps, n, n))
    S = np.empty((steps, m, m))
    G = np.empty((steps, n, m))
    L = np.zeros((m, m))
    eye = np.eye(n)
    P_pred[0] = P0
    sym_inplace(P_pred[0])
    for i in range(steps):
        P = P_pred[i]
        PHt = mmt(P, H)
        S[i] = mm(H, PHt) + R
        sym_inplace(S[i])
        if chol_factor(S[i], L) >= 0:
            return P_pred, P_filt, S, G, i
        G[i] = chol_solve(L, PHt.T.copy()).T
        A = eye - mm(G[i], H)
        P_filt[i] = sandwich(A, P) + sandwich(G[i], R)
        sym_inplace(P_filt[i])
        if i + 1 < steps:
            P_pred[i + 1] = sandwich(Fs[i], P_filt[i]) + Qs[i]
            sym_inplace(P_pred[i + 1])
    return P_pred, P_filt, S, G, -1


@njit(cache=True, nogil=True)
def _affine_sweep(Fs, d, H, G, z0, u):
    """State-like half of a Kalman filter, batched.

    ``z_pred[0] = z0``; ``z_filt[i] = z_pred[i] + G[i](u[i] - H z_pred[i])``;
    ``z_pred[i+1] = Fs[i] z_filt[i] + d[i]``.

    Shapes: Fs (steps-1, n, n), d (steps-1, n), G (steps, n, m),
    z0 (N, n), u (steps, N, m).
    """
    steps, N, m = u.shape
    n = z0.shape[1]
    z_pred = np.empty((steps, N, n))
    z_filt = np.empty((steps, N, n))
    z_pred[0] = z0
    innov = np.empty(m)
    for i in range(steps):
        for r in range(N):
            for a in range(m):
                s = u[i, r, a]
                for b in range(n):
                    s -= H[a, b] * z_pred[i, r, b]
                innov[a] = s
            for a in range(n):
                s = z_pred[i, r, a]
                for b in range(m):
                    s += G[i, a, b] * innov[b]
                z_filt[i, r, a] = s
        if i + 1 < steps:
            for r in range(N):
                for a in range(n):
                    s = d[i, a]
                    for b in range(n):
                        s += Fs[i, a, b] * z_filt[i, r, b]
                    z_pred[i + 1, r, a] = s
    return z_pred, z_filt


@njit(cache=True, nogil=True)
def _rts_sweep(P_filt, P_pred, F):
    steps, n, _ = P_filt.shape
    Ls = np.zeros((steps, n, n))
    P_s = np.empty_like(P_filt)
    P_s[steps - 1] = P_filt[steps - 1]
    C = np.zeros((n, n))
    for k in range(steps - 2, -1, -1):
        if chol_factor(P_pred[k + 1], C) >= 0:
            return Ls, P_s, k + 1
        # L_k = P_f F^T P_pred^{-1}  <=>  P_pred L_k^T = F P_f
        Lk = chol_solve(C, mm(F, P_filt[k])).T.copy()
        Ls[k] = Lk
        P_s[k] = P_filt[k] + sandwich(Lk, P_s[k + 1] - P_pred[k + 1])
        sym_inplace(P_s[k])
    return Ls, P_s, -1


@njit(cache=True, nogil=True)
def _rts_states(Ls, x_filt, x_pred):
    steps, N, n = x_filt.shape
    x_s = np.empty_like(x_filt)
    x_s[steps - 1] = x_filt[steps - 1]
    for k in range(steps - 2, -1, -1):
        for r in range(N):
            for a in range(n):
                s = x_filt[k, r, a]
                for b in range(n):
                    s += Ls[k, a, b] * (x_s[k + 1, r, b] - x_pred[k + 1, r, b])
                x_s[k, r, a] = s
    return x_s


# --- helpers --------------------------------------------------------------


def _as_batch(y, n_y: int):
    """Return ``(y3, single)`` with ``y3`` of shape (steps, N, n_y)."""
    y = np.asarray(y, dtype=float)
    if y.ndim == 1 and n_y == 1:
        y = y[:, None]
    if y.ndim == 2:
        if y.shape[1] != n_y:
            raise ValueError(f"measurements have {y.shape[1]} components, model expects {n_y}")
        return np.ascontiguousarray(y[:, None, :]), True
    if y.ndim == 3 and y.shape[2] == n_y:
        return np.ascontiguousarray(y), False
    raise ValueError(f"bad measurement array shape {y.shape}")


def _unbatch(z, single: bool):
    return z[:, 0, :] if single else z


def forward_affine(m: AssumedModel, gains: np.ndarray, z0, u, d=None):
    """Run ``z -> F z + d`` predictions and gain updates driven by ``u``.

    ``u`` is (K+1, n_y) or (K+1, N, n_y); ``z0`` is (n_x,) or (N, n_x);
    ``d`` (K+1, n_x) is added to the prediction into step k (``d[0]`` ignored).
    Returns ``(z_pred, z_filt)`` shaped like ``u`` with n_x components.
    """
    u3, single = _as_batch(u, m.n_y)
    steps, N, _ = u3.shape
    if gains.shape[0] != steps:
        raise ValueError(f"{gains.shape[0]} gains for {steps} measurement steps")
    z0 = np.broadcast_to(np.asarray(z0, dtype=float), (N, m.n_x)).copy()
    Fs = np.broadcast_to(m.F, (steps - 1, m.n_x, m.n_x))
    dd = np.zeros((steps - 1, m.n_x)) if d is None else np.ascontiguousarray(np.asarray(d, float)[1:])
    zp, zf = _affine_sweep(np.ascontiguousarray(Fs), dd, m.H, gains, z0, u3)
    return _unbatch(zp, single), _unbatch(zf, single)


def backward_affine(m: AssumedModel, rt: ReversedTimeModel, gains_b: np.ndarray, zK, u, d=None):
    """Reversed-time counterpart of :func:`forward_affine`.

    Predictions run ``z_pred[k] = F_b[k] z_filt[k+1] + d[k]`` for k < K and
    ``z_pred[K] = zK``.  Arrays are indexed by forward time.
    """
    u3, single = _as_batch(u, m.n_y)
    steps, N, _ = u3.shape
    zK = np.broadcast_to(np.asarray(zK, dtype=float), (N, m.n_x)).copy()
    dd = np.zeros((steps - 1, m.n_x)) if d is None else np.asarray(d, float)[:-1]
    zp, zf = _affine_sweep(
        np.ascontiguousarray(rt.F_b[::-1]), np.ascontiguousarray(dd[::-1]), m.H,
        np.ascontiguousarray(gains_b[::-1]), zK, np.ascontiguousarray(u3[::-1]))
    zp, zf = zp[::-1], zf[::-1]
    return _unbatch(zp, single), _unbatch(zf, single)


# --- passes ---------------------------------------------------------------


@dataclass(frozen=True)
class ForwardPass:
    """Forward filter output; the ``x_*`` fields are None in gains-only mode."""

    P_pred: np.ndarray
    P_filt: np.ndarray
    gain: np.ndarray
    innov_cov: np.ndarray
    x_pred: np.ndarray | None = None
    x_filt: np.ndarray | None = None

    @property
    def K(self) -> int:
        return self.P_filt.shape[0] - 1


@dataclass(frozen=True)
class BackwardPass:
    """Reversed-time filter output, indexed by forward time k = 0..K.

    ``P_pred_b[k]`` is P_{k|k+1:K} (the prior Sigma_K at k = K) and
    ``P_filt_b[k]`` is P_{k|k:K}.
    """

    P_pred_b: np.ndarray
    P_filt_b: np.ndarray
    gain_b: np.ndarray
    innov_cov_b: np.ndarray
    x_pred_b: np.ndarray | None = None
    x_filt_b: np.ndarray | None = None

    @property
    def K(self) -> int:
        return self.P_filt_b.shape[0] - 1


@dataclass(frozen=True)
class SmoothedPass:
    P_smooth: np.ndarray
    method: str
    x_smooth: np.ndarray | None = None
    gain: np.ndarray | None = None  # RTS gains L_k (RTS only)


def forward_covariances(m: AssumedModel, K: int) -> ForwardPass:
    """Gains-only forward pass (no measurements needed)."""
    Fs = np.ascontiguousarray(np.broadcast_to(m.F, (K, m.n_x, m.n_x)))
    Qs = np.ascontiguousarray(np.broadcast_to(m.Q, (K, m.n_x, m.n_x)))
    P_pred, P_filt, S, G, bad = _riccati_sweep(Fs, Qs, m.H, m.R, m.Sigma0)
    if bad >= 0:
        raise NotPositiveDefinite(f"innovation covariance S_{bad} is not positive definite")
    return ForwardPass(P_pred, P_filt, G, S)


def kf_forward(m: AssumedModel, y=None, K: int | None = None) -> ForwardPass:
    """Kalman filter over steps 0..K; the prediction at k = 0 is (mu0, Sigma0).

    With ``y=None`` only the covariance sweep runs (``K`` required).  ``y``
    may carry a batch axis: (K+1, N, n_y).
    """
    if y is None:
        if K is None:
            raise ValueError("gains-only mode needs K")
        return forward_covariances(m, K)
    y3, _ = _as_batch(y, m.n_y)
    fp = forward_covariances(m, y3.shape[0] - 1)
    x_pred, x_filt = forward_affine(m, fp.gain, m.mu0, y)
    return ForwardPass(fp.P_pred, fp.P_filt, fp.gain, fp.innov_cov, x_pred, x_filt)


def backward_covariances(m: AssumedModel, rt: ReversedTimeModel) -> BackwardPass:
    Sigma_K = rt.moments.Sigma[-1]
    P_pred, P_filt, S, G, bad = _riccati_sweep(
        np.ascontiguousarray(rt.F_b[::-1]), np.ascontiguousarray(rt.Q_b[::-1]),
        m.H, m.R, np.ascontiguousarray(Sigma_K))
    if bad >= 0:
        k = rt.moments.K - bad
        raise NotPositiveDefinite(f"backward innovation covariance at k={k} is not PD")
    return BackwardPass(P_pred[::-1], P_filt[::-1], G[::-1], S[::-1])


def kf_backward(m: AssumedModel, rt: ReversedTimeModel, y=None) -> BackwardPass:
    """Reversed-time Kalman filter, k = K..0, anchored at (mu_K, Sigma_K)."""
    bp = backward_covariances(m, rt)
    if y is None:
        return bp
    mu = rt.moments.mu
    # x_pred[k] = mu_k + F_b[k](x_filt[k+1] - mu_{k+1})
    d = np.zeros_like(mu)
    d[:-1] = mu[:-1] - np.einsum("kij,kj->ki", rt.F_b, mu[1:])
    x_pred, x_filt = backward_affine(m, rt, bp.gain_b, mu[-1], y, d)
    return BackwardPass(bp.P_pred_b, bp.P_filt_b, bp.gain_b, bp.innov_cov_b, x_pred, x_filt)


def rts_smooth(m: AssumedModel, f: ForwardPass) -> SmoothedPass:
    """Rauch-Tung-Striebel smoother anchored at the final filter estimate."""
    Ls, P_s, bad = _rts_sweep(f.P_filt, f.P_pred, m.F)
    if bad >= 0:
        raise NotPositiveDefinite(f"predicted covariance P_{bad}|{bad - 1} is not PD")
    x_s = None
    if f.x_filt is not None:
        single = f.x_filt.ndim == 2
        xf = f.x_filt[:, None, :] if single else f.x_filt
        xp = f.x_pred[:, None, :] if single else f.x_pred
        x_s = _unbatch(_rts_states(Ls, np.ascontiguousarray(xf), np.ascontiguousarray(xp)), single)
    return SmoothedPass(P_s, "RTS", x_s, Ls)


@dataclass(frozen=True)
class Information:
    """Inverses reused by every two-filter style combination."""

    P_smooth: np.ndarray
    fwd: np.ndarray    # P_{k|0:k}^{-1}
    bwd: np.ndarray    # P_{k|k+1:K}^{-1}
    prior: np.ndarray  # Sigma_k^{-1}


def information_from(P_filt, P_pred_b, Sigma_inv) -> Information:
    """Combination weights from forward filtered and backward predicted
    covariances; the information sum is symmetrized before inversion."""
    Jf = batch_spd_inverse(P_filt)
    Jb = batch_spd_inverse(P_pred_b)
    total = Jf + Jb - Sigma_inv
    total = 0.5 * (total + np.swapaxes(total, -1, -2))
    try:
        P_s = batch_spd_inverse(total)
    except NotPositiveDefinite as exc:
        raise InformationNotPd(f"summed information is not PD: {exc}") from None
    return Information(P_s, Jf, Jb, Sigma_inv)


def information(mm_: MarginalMoments, f: ForwardPass, b: BackwardPass,
                Sigma_inv: np.ndarray | None = None) -> Information:
    Js = batch_spd_inverse(mm_.Sigma) if Sigma_inv is None else Sigma_inv
    return information_from(f.P_filt, b.P_pred_b, Js)


def combine_vectors(info: Information, v_fwd, v_bwd_pred, v_prior=None):
    """``P_s (J_f v_f + J_b v_b - J_prior v_prior)`` at every k (batch aware)."""
    ein = "kij,k...j->k...i"
    acc = np.einsum(ein, info.fwd, v_fwd) + np.einsum(ein, info.bwd, v_bwd_pred)
    if v_prior is not None:
        acc = acc - np.einsum(ein, info.prior, v_prior)
    return np.einsum(ein, info.P_smooth, acc)


def two_filter_combine(mm_: MarginalMoments, f: ForwardPass, b: BackwardPass,
                       info: Information | None = None) -> SmoothedPass:
    """Modified two-filter smoother: fuse forward filtered and backward
    predicted estimates, removing the doubly counted prior information."""
    info = info if info is not None else information(mm_, f, b)
    x_s = None
    if f.x_filt is not None and b.x_pred_b is not None:
        mu = mm_.mu
        if f.x_filt.ndim == 3:
            mu = mu[:, None, :]
        x_s = combine_vectors(info, f.x_filt, b.x_pred_b, np.broadcast_to(mu, f.x_filt.shape))
    return SmoothedPass(info.P_smooth, "TwoFilter", x_s)


def smooth_two_filter(m: AssumedModel, y, rt: ReversedTimeModel | None = None) -> SmoothedPass:
    """Convenience: forward filter, backward filter and combination on ``y``."""
    y3, _ = _as_batch(y, m.n_y)
    K = y3.shape[0] - 1
    if rt is None:
        rt = reversed_time_model(m, K)
    f = kf_forward(m, y)
    b = kf_backward(m, rt, y)
    return two_filter_combine(rt.moments, f, b, information(rt.moments, f, b, rt.Sigma_inv))


__all__ = [
    "BackwardPass", "ForwardPass", "Information", "InformationNotPd", "SmoothedPass",
    "backward_affine", "backward_covariances", "combine_vectors", "forward_affine",
    "forward_covariances", "information", "information_from", "kf_backward", "kf_forward",
    "rts_smooth", "smooth_two_filter", "two_filter_combine",
]
