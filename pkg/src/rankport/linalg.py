"""Shared SVD-based solves: every pseudo-inverse and rank decision in the
package goes through these, with a relative cutoff of 1e-10 by default."""

from __future__ import annotations

import numpy as np

SVD_RCOND = 1e-10


def pinv_with_rank(A: np.ndarray, rcond: float = SVD_RCOND):
    """Moore-Penrose inverse plus the numerical rank at cutoff rcond * s_max.

    Returns (pinv, rank, singular_values).
    """
    if A.size == 0:
        return A.reshape(A.shape[::-1]).copy(), 0, np.zeros(0)
    U, s, Vt = np.linalg.svd(A)
    cut = rcond * s[0] if s.size else 0.0
    r = int(np.sum(s > cut))
    pinv = (Vt[:r].T / s[:r]) @ U[:, :r].T
    return pinv, r, s


def svd_solve(A: np.ndarray, b: np.ndarray, rcond: float = SVD_RCOND) -> np.ndarray:
    """Least-squares solve through the pseudo-inverse."""
    pinv, _, _ = pinv_with_rank(A, rcond)
    return pinv @ b


def sym_sqrt(A: np.ndarray) -> np.ndarray:
    """Symmetric square root of a PSD matrix (negative eigenvalues clipped)."""
    w, V = np.linalg.eigh((A + A.T) / 2.0)
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T
