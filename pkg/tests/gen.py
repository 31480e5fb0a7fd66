"""Random scenario builders shared by the test modules.

Everything is driven by a numpy ``Generator`` so hypothesis only has to draw
a seed and a few sizes.
"""
import numpy as np
from hypothesis import strategies as st

from kfmse.models import AssumedModel, Trajectory, TrueMeasModel


def spd(rng, n, scale=1.0, floor=0.1):
    a = rng.standard_normal((n, n))
    return scale * (a @ a.T / n + floor * np.eye(n))


def psd_low_rank(rng, n, rank, scale=1.0):
    a = rng.standard_normal((n, rank))
    return scale * a @ a.T


def stable(rng, n, rho_max=0.99):
    a = rng.standard_normal((n, n))
    rho = np.max(np.abs(np.linalg.eigvals(a)))
    return a * rng.uniform(0.3, rho_max) / rho


def assumed_model(rng, n_x, n_y=None, F=None):
    n_y = n_y or max(1, n_x // 2)
    return AssumedModel(
        F=stable(rng, n_x) if F is None else F,
        Q=spd(rng, n_x, 0.5),
        H=rng.standard_normal((n_y, n_x)),
        R=spd(rng, n_y),
        mu0=rng.standard_normal(n_x),
        Sigma0=spd(rng, n_x, 2.0),
    )


def mismatched(rng, am, K, h_scale=0.1):
    """A truth that departs from the assumed model in dynamics, measurement
    matrix and noise level."""
    n_x, n_y = am.n_x, am.n_y
    F_true = am.F + 0.05 * rng.standard_normal((n_x, n_x))
    x = np.empty((K + 1, n_x))
    x[0] = am.mu0 + rng.standard_normal(n_x)
    for k in range(1, K + 1):
        x[k] = F_true @ x[k - 1] + 0.3 * np.sin(0.1 * k + np.arange(n_x))
    tm = TrueMeasModel(am.H + h_scale * rng.standard_normal((n_y, n_x)), spd(rng, n_y, 1.5))
    return Trajectory(x), tm


def random_scenario(seed, n_x, K, n_y=None):
    rng = np.random.default_rng(seed)
    am = assumed_model(rng, n_x, n_y)
    t, tm = mismatched(rng, am, K)
    return t, tm, am


def rel_err(a, b):
    """Largest deviation relative to the magnitude of the reference sequence."""
    a, b = np.asarray(a), np.asarray(b)
    scale = max(np.max(np.abs(b)), np.finfo(float).tiny)
    return float(np.max(np.abs(a - b)) / scale)


def is_psd_seq(stack, rtol=1e-9):
    stack = np.asarray(stack)
    if not np.allclose(stack, np.swapaxes(stack, -1, -2), rtol=0,
                       atol=rtol * max(np.max(np.abs(stack)), 1e-300)):
        return False
    lam = np.linalg.eigvalsh(0.5 * (stack + np.swapaxes(stack, -1, -2)))
    scale = np.maximum(np.max(np.abs(lam), axis=-1, keepdims=True), 1e-300)
    return bool(np.all(lam >= -rtol * scale))


seeds = st.integers(0, 2**32 - 1)
dims = st.sampled_from([1, 2, 3, 4])
