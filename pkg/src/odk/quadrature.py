"""Uniform-grid convolution and Volterra integro-differential solvers."""
from __future__ import annotations

from typing import Callable

import numpy as np
import scipy.linalg as la

from .errors import VolterraNotConverged
from .timegrid import TimeGrid, as_grid


def convolve(A: np.ndarray, B: np.ndarray, h: float) -> np.ndarray:
    """Trapezoidal matrix convolution ``(A*B)(t_i) = int_0^t A(t-s) B(s) ds``.

    ``A`` and ``B`` have shape ``(n, p, q)`` and ``(n, q, r)`` (or ``(n,)``
    for scalars) on a uniform grid with spacing ``h``.  The Toeplitz sum is
    evaluated by FFT.
    """
    A = np.asarray(A)
    B = np.asarray(B)
    scalar = A.ndim == 1
    if scalar:
        A = A[:, None, None]
        B = B[:, None, None]
    n = A.shape[0]
    m = 1 << int(np.ceil(np.log2(2 * n)))
    cplx = np.iscomplexobj(A) or np.iscomplexobj(B)
    fa = np.fft.fft(A, m, axis=0)
    fb = np.fft.fft(B, m, axis=0)
    full = np.fft.ifft(np.einsum("fik,fkj->fij", fa, fb), axis=0)[:n]
    if not cplx:
        full = full.real
    # trapezoid end corrections
    corr = 0.5 * (np.einsum("nik,kj->nij", A, B[0]) + np.einsum("ik,nkj->nij", A[0], B))
    out = h * (full - corr)
    out[0] = 0.0
    return out[:, 0, 0] if scalar else out


def _kernel_samples(kernel, times) -> np.ndarray:
    if callable(kernel):
        K = np.asarray(kernel(times))
        if K.ndim == 1:
            K = K[:, None, None]
        return K
    return np.asarray(kernel)


def _ide_run(A, K, X0, h):
    """Trapezoidal (Crank-Nicolson) stepping of ``X' = A X + int K(t-s) X(s) ds``."""
    n = K.shape[0]
    m = X0.shape[0]
    X = np.zeros((n,) + X0.shape, dtype=complex)
    F = np.zeros_like(X)
    X[0] = X0
    F[0] = A @ X0
    lhs = la.lu_factor(np.eye(m) - 0.5 * h * A - 0.25 * h * h * K[0])
    for i in range(n - 1):
        j = i + 1
        # history part of the integral at t_{i+1}, excluding the X_{i+1} term
        hist = 0.5 * K[j] @ X[0]
        if i >= 1:
            hist = hist + np.einsum("jab,jb...->a...", K[j - 1:0:-1], X[1:j])
        rhs = X[i] + 0.5 * h * F[i] + 0.5 * h * h * hist
        X[j] = la.lu_solve(lhs, rhs)
        F[j] = A @ X[j] + h * (hist + 0.5 * K[0] @ X[j])
    return X, F


def volterra_ide(A, kernel, X0, grid, extrapolate: bool = True, conv_tol: float = 1e-3):
    """Solve ``dX/dt = A X(t) + int_0^t K(t-s) X(s) ds`` on a uniform grid.

    Parameters
    ----------
    A : array_like, shape (m, m)
        Time-local part.
    kernel : callable or array
        ``K(times)`` returning shape ``(n, m, m)``; arrays must already be
        sampled on the grid (extrapolation is then disabled).
    X0 : array_like, shape (m,) or (m, p)
    grid : TimeGrid
    extrapolate : bool
        Repeat on the 2x refined grid and return the Richardson combination.
    conv_tol : float
        Maximum admissible difference between the two raw solutions.

    Returns
    -------
    X, Xdot, delta
        Solution and derivative samples on ``grid`` plus the raw refinement
        difference (NaN without extrapolation).
    """
    grid = as_grid(grid)
    A = np.asarray(A, dtype=complex)
    X0 = np.asarray(X0, dtype=complex)
    K = _kernel_samples(kernel, grid.times)
    X, F = _ide_run(A, K, X0, grid.h)
    if not extrapolate or not callable(kernel):
        return X, F, float("nan")
    fine = grid.refine(2)
    Xf, Ff = _ide_run(A, _kernel_samples(kernel, fine.times), X0, fine.h)
    Xf, Ff = Xf[::2], Ff[::2]
    delta = float(np.abs(Xf - X).max())
    if not np.isfinite(delta) or delta > conv_tol:
        raise VolterraNotConverged(f"grid refinement changed the solution by {delta:.3e}")
    return (4 * Xf - X) / 3, (4 * Ff - F) / 3, delta
