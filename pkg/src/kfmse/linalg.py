"""Small dense linear algebra for symmetric positive-definite systems.

Matrices are plain ``numpy.ndarray`` objects (float64, C order).  The
Cholesky kernels are compiled with numba so the same code path serves the
Python-level helpers here and the recursions in :mod:`kfmse.kalman` and
:mod:`kfmse.mse`.
"""
from __future__ import annotations

import logging

import numpy as np
from numba import njit

log = logging.getLogger(__name__)

#: Relative symmetry tolerance: max|A - A^T| / (1 + max|A|).
SYM_TOL = 1e-9
#: Cholesky pivot threshold, relative to trace(A)/n.
PD_EPS = 1e-12
#: Diagonal loading used by the opt-in jitter, relative to trace(A)/n.
JITTER = 1e-9


class NotPositiveDefinite(np.linalg.LinAlgError):
    """A Cholesky pivot fell at or below the positive-definiteness threshold."""


class NonSquare(ValueError):
    pass


# --- numba kernels ------------------------------------------------------
# Shared by the compiled recursions; they signal failure through return
# values because raising inside nopython code loses the context.


@njit(cache=True, nogil=True)
def chol_factor(a, out):
    """Lower Cholesky factor of ``a`` written to ``out``.

    Returns -1 on success, otherwise the index of the first failing pivot.
    """
    n = a.shape[0]
    tr = 0.0
    for i in range(n):
        tr += a[i, i]
    eps = PD_EPS * tr / n
    if not eps > 0.0:
        # non-positive trace: no valid threshold, nothing can be PD
        return 0
    for j in range(n):
        s = a[j, j]
        for p in range(j):
            s -= out[j, p] * out[j, p]
        if not s > eps:
            return j
        d = np.sqrt(s)
        out[j, j] = d
        for i in range(j + 1, n):
            t = a[i, j]
            for p in range(j):
                t -= out[i, p] * out[j, p]
            out[i, j] = t / d
        for i in range(j):
            out[i, j] = 0.0
    return -1


@njit(cache=True, nogil=True)
def chol_solve(L, b):
    """Solve ``L L^T X = b`` for a lower-triangular ``L``; ``b`` is 2-D."""
    n, m = b.shape
    x = np.empty((n, m))
    for c in range(m):
        for i in range(n):
            s = b[i, c]
            for p in range(i):
                s -= L[i, p] * x[p, c]
            x[i, c] = s / L[i, i]
        for i in range(n - 1, -1, -1):
            s = x[i, c]
            for p in range(i + 1, n):
                s -= L[p, i] * x[p, c]
            x[i, c] = s / L[i, i]
    return x


@njit(cache=True, nogil=True)
def mm(a, b):
    n, p = a.shape
    m = b.shape[1]
    out = np.zeros((n, m))
    for i in range(n):
        for q in range(p):
            aiq = a[i, q]
            for j in range(m):
                out[i, j] += aiq * b[q, j]
    return out


@njit(cache=True, nogil=True)
def mmt(a, b):
    """``a @ b.T``."""
    n, p = a.shape
    m = b.shape[0]
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            s = 0.0
            for q in range(p):
                s += a[i, q] * b[j, q]
            out[i, j] = s
    return out


@njit(cache=True, nogil=True)
def sandwich(a, p):
    """``a @ p @ a.T``, symmetrized."""
    out = mmt(mm(a, p), a)
    sym_inplace(out)
    return out


@njit(cache=True, nogil=True)
def sym_inplace(a):
    n = a.shape[0]
    for i in range(n):
        for j in range(i + 1, n):
            m = 0.5 * (a[i, j] + a[j, i])
            a[i, j] = m
            a[j, i] = m


# --- Python-level API ---------------------------------------------------


def _square(a) -> np.ndarray:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NonSquare(f"expected a square matrix, got shape {a.shape}")
    return a


def symmetrize(a) -> np.ndarray:
    """Return ``(a + a.T) / 2``."""
    a = _square(a)
    return 0.5 * (a + a.T)


def is_symmetric(a, tol: float = SYM_TOL) -> bool:
    a = _square(a)
    return float(np.max(np.abs(a - a.T))) <= tol * (1.0 + float(np.max(np.abs(a))))


def cholesky(a, jitter: bool = False) -> np.ndarray:
    """Lower Cholesky factor of a symmetric positive-definite matrix.

    Raises
    ------
    NotPositiveDefinite
        If a pivot is at or below ``PD_EPS * trace(a) / n``.  With
        ``jitter=True`` a diagonal load of ``JITTER * trace(a) / n`` is
        added (and logged) before factorizing.
    """
    a = np.ascontiguousarray(_square(a))
    n = a.shape[0]
    if jitter:
        delta = JITTER * float(np.trace(a)) / n
        log.warning("adding jitter %.3g*I to a %dx%d matrix", delta, n, n)
        a = a + delta * np.eye(n)
    L = np.zeros_like(a)
    k = chol_factor(a, L)
    if k >= 0:
        raise NotPositiveDefinite(f"Cholesky pivot {k} not positive (n={n})")
    return L


def assert_spd(a, tol: float = SYM_TOL) -> np.ndarray:
    """Check symmetry and positive definiteness; return the Cholesky factor."""
    if not is_symmetric(a, tol):
        raise NotPositiveDefinite("matrix is not symmetric")
    return cholesky(a)


def spd_solve(a, b, jitter: bool = False) -> np.ndarray:
    """Solve ``a @ x = b`` for symmetric positive-definite ``a``.

    ``b`` may be a vector or a matrix; the result has the same shape.
    """
    L = cholesky(a, jitter=jitter)
    b = np.asarray(b, dtype=float)
    vec = b.ndim == 1
    x = chol_solve(L, np.ascontiguousarray(b.reshape(L.shape[0], -1)))
    return x[:, 0] if vec else x


def spd_inverse(a, jitter: bool = False) -> np.ndarray:
    a = _square(a)
    return symmetrize(spd_solve(a, np.eye(a.shape[0]), jitter=jitter))


@njit(cache=True, nogil=True)
def psd_probe(a, rel_tol):
    """Cholesky-with-jitter PSD test on one symmetric matrix."""
    n = a.shape[0]
    tr = 0.0
    amax = 0.0
    for i in range(n):
        tr += a[i, i]
        for j in range(n):
            if not np.isfinite(a[i, j]):
                return False
            amax = max(amax, abs(a[i, j]))
    if amax == 0.0:
        return True
    if not tr > 0.0:
        return False
    b = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            b[i, j] = 0.5 * (a[i, j] + a[j, i])
        b[i, i] += rel_tol * tr / n
    L = np.zeros((n, n))
    return chol_factor(b, L) < 0


@njit(cache=True, nogil=True)
def first_non_psd(stack, rel_tol):
    for k in range(stack.shape[0]):
        if not psd_probe(stack[k], rel_tol):
            return k
    return -1


def is_psd(a, rel_tol: float = 1e-9) -> bool:
    """PSD test: ``a`` passes if ``a + rel_tol * trace(a)/n * I`` factorizes.

    Equivalently its smallest eigenvalue is above about ``-rel_tol * trace/n``.
    A zero matrix is PSD.
    """
    return bool(psd_probe(np.ascontiguousarray(_square(a)), rel_tol))


def batch_spd_inverse(a: np.ndarray) -> np.ndarray:
    """Inverse of every matrix in a stack ``(..., n, n)``.

    Raises NotPositiveDefinite naming the first failing index.
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[-1]
    try:
        L = np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        L = None
    if L is not None:
        piv = np.diagonal(L, axis1=-2, axis2=-1) ** 2
        eps = PD_EPS * np.trace(a, axis1=-2, axis2=-1) / n
        ok = np.all(piv > eps[..., None], axis=-1)
    if L is None or not np.all(ok):
        flat = a.reshape(-1, n, n)
        for i, m in enumerate(flat):
            try:
                cholesky(m)
            except NotPositiveDefinite as exc:
                idx = np.unravel_index(i, a.shape[:-2]) if a.ndim > 2 else ()
                raise NotPositiveDefinite(f"matrix at index {idx}: {exc}") from None
        if L is None:
            raise NotPositiveDefinite("stack is not positive definite")
    Linv = np.linalg.inv(L)
    inv = np.swapaxes(Linv, -1, -2) @ Linv
    return 0.5 * (inv + np.swapaxes(inv, -1, -2))
