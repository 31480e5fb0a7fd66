"""Brute-force references for the analytical recursions."""
import numpy as np

from kfmse.kalman import kf_backward, kf_forward, rts_smooth, smooth_two_filter
from kfmse.linalg import cholesky
from kfmse.mse import error_propagate, estimator_passes


def noiseless_bias(t, tm, am):
    """Run the actual estimators on y_k = H_bar x_k and subtract the truth."""
    y = t.states @ tm.H_bar.T
    f = kf_forward(am, y)
    passes = estimator_passes(am, t.K)
    b = kf_backward(am, passes.reversed, y)
    return {
        "b_fwd": f.x_filt - t.states,
        "b_bwd": b.x_filt_b - t.states,
        "b_bwd_pred": b.x_pred_b - t.states,
        "b_rts": rts_smooth(am, f).x_smooth - t.states,
        "b_smooth": smooth_two_filter(am, y, passes.reversed).x_smooth - t.states,
    }


def sensitivity_covariances(tm, am, K):
    """C = M blkdiag(R_bar) M^T with M built column by column from unit
    noise impulses pushed through the error propagation."""
    n_y = am.n_y
    passes = estimator_passes(am, K)
    n_cols = (K + 1) * n_y
    impulses = np.zeros((K + 1, n_cols, n_y))
    for k in range(K + 1):
        for i in range(n_y):
            impulses[k, k * n_y + i, i] = 1.0
    e_f, e_bp, e_b, e_s = error_propagate(am, passes, impulses)
    R_big = np.kron(np.eye(K + 1), tm.R_bar)

    def cov(e):
        M = np.swapaxes(e, 1, 2)          # (K+1, n_x, n_cols)
        return M @ R_big @ np.swapaxes(M, 1, 2)

    return {"C_fwd": cov(e_f), "C_bwd_pred": cov(e_bp), "C_bwd": cov(e_b),
            "C_smooth": cov(e_s)}


def colored(tm, z):
    return z @ cholesky(tm.R_bar).T


def rts_sensitivity(am, R_bar, K):
    """Filter and RTS smoother noise covariances from the estimators' own
    impulse responses; shares no code with the two-filter combination."""
    n_y = am.n_y
    n_cols = (K + 1) * n_y
    Y = np.zeros((K + 1, n_cols, n_y))
    for k in range(K + 1):
        for i in range(n_y):
            Y[k, k * n_y + i, i] = 1.0
    f0 = kf_forward(am, np.zeros((K + 1, n_y)))
    s0 = rts_smooth(am, f0).x_smooth
    f = kf_forward(am, Y)
    xs = rts_smooth(am, f).x_smooth - s0[:, None, :]
    xf = f.x_filt - f0.x_filt[:, None, :]
    R_big = np.kron(np.eye(K + 1), R_bar)

    def cov(e):
        M = np.swapaxes(e, 1, 2)
        return M @ R_big @ np.swapaxes(M, 1, 2)

    return cov(xf), cov(xs)
