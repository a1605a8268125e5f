"""Small shared linear-algebra helpers for covariance handling."""

from __future__ import annotations

import numpy as np


def symmetrize(p: np.ndarray) -> np.ndarray:
    """Project a nearly-symmetric matrix onto the symmetric matrices."""
    return 0.5 * (p + p.T)


def psd_pinv(p: np.ndarray, rtol: float = 1e-12) -> np.ndarray:
    """Pseudo-inverse of a symmetric PSD matrix via eigendecomposition.

    Eigenvalues below ``rtol`` times the largest eigenvalue are treated as
    exact zeros, so structurally singular covariances (zero process noise on
    the plant-state block) invert cleanly on their positive-rank subspace.
    """
    w, v = np.linalg.eigh(symmetrize(p))
    wmax = float(w.max(initial=0.0))
    if wmax <= 0.0:
        return np.zeros_like(p)
    keep = w > rtol * wmax
    inv = np.where(keep, 1.0 / np.where(keep, w, 1.0), 0.0)
    return (v * inv) @ v.T


def right_pinv_product(a: np.ndarray, p: np.ndarray, rtol: float = 1e-12) -> np.ndarray:
    """Compute ``a @ psd_pinv(p)`` without forming the inverse.

    Keeps the row count of ``a`` throughout, which matters inside the
    forward-only accumulator where ``a`` has only as many rows as controls.
    A Cholesky solve handles the common positive definite case; exactly
    singular covariances (possible until the horizon covers the controllable
    subspace) fall back to the eigendecomposition pseudo-inverse.
    """
    try:
        x = np.linalg.solve(p, a.T).T
        # exactly singular p can yield garbage instead of raising; verify
        resid = np.max(np.abs(x @ p - a))
        scale = max(float(np.max(np.abs(a))), 1e-300)
        if np.isfinite(resid) and resid <= 1e-9 * scale:
            return x
    except np.linalg.LinAlgError:
        pass
    w, v = np.linalg.eigh(symmetrize(p))
    wmax = float(w.max(initial=0.0))
    if wmax <= 0.0:
        return np.zeros_like(a)
    keep = w > rtol * wmax
    inv = np.where(keep, 1.0 / np.where(keep, w, 1.0), 0.0)
    return ((a @ v) * inv) @ v.T


def psd_sqrt_columns(p: np.ndarray) -> np.ndarray:
    """Square-root factor L with L @ L.T == p, for symmetric PSD p.

    Negative eigenvalues (numerical noise) are clamped to zero, so exactly
    singular matrices are accepted.
    """
    w, v = np.linalg.eigh(symmetrize(p))
    w = np.clip(w, 0.0, None)
    return v * np.sqrt(w)


def spd_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``a @ x = b`` for symmetric positive definite ``a``.

    Raises:
        np.linalg.LinAlgError: if ``a`` is not positive definite.
    """
    c = np.linalg.cholesky(symmetrize(a))
    y = np.linalg.solve(c, b)
    return np.linalg.solve(c.T, y)


def spectral_norm(a: np.ndarray) -> float:
    """Largest singular value of a (small) matrix.

    Single-row/column matrices reduce to the vector norm and two-row matrices
    to a closed-form 2x2 eigenvalue, which keeps the per-step termination
    metrics cheap inside the controllers.
    """
    if a.size == 0:
        return 0.0
    if min(a.shape) == 1:
        return float(np.sqrt(np.sum(a * a)))
    if min(a.shape) == 2:
        g = a @ a.T if a.shape[0] == 2 else a.T @ a
        tr = g[0, 0] + g[1, 1]
        det = g[0, 0] * g[1, 1] - g[0, 1] * g[1, 0]
        disc = max(tr * tr - 4.0 * det, 0.0)
        return float(np.sqrt(0.5 * (tr + np.sqrt(disc))))
    return float(np.linalg.norm(a, 2))


def spectral_radius(a: np.ndarray) -> float:
    """Largest eigenvalue magnitude of a square matrix."""
    return float(np.max(np.abs(np.linalg.eigvals(a))))
