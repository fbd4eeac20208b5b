"""Symmetric positive-definite solves with a Tikhonov fallback."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.linalg import lapack

from .errors import IllConditionedMoments

# Relative condition number above which the diagonal is loaded.
COND_LIMIT = 1e12
# Diagonal loading, relative to the mean diagonal entry.
TIKHONOV_SCALE = 1e-10


@dataclass(frozen=True)
class SPDFactor:
    """Cholesky factor of a symmetric matrix plus conditioning metadata."""

    chol: np.ndarray
    rcond: float
    regularized: bool
    ridge: float

    def solve(self, b: np.ndarray) -> np.ndarray:
        return linalg.cho_solve((self.chol, True), b, check_finite=False)


def _cholesky(a: np.ndarray):
    c, info = lapack.dpotrf(a, lower=1, clean=1, overwrite_a=0)
    if info != 0:
        return None, 0.0
    anorm = np.abs(a).sum(axis=0).max()
    rcond, info = lapack.dpocon(c, anorm, uplo="L")
    return c, float(rcond) if info == 0 else 0.0


def spd_factor(a: np.ndarray, what: str = "moment matrix") -> SPDFactor:
    """Factor a symmetric PSD matrix, loading the diagonal when needed.

    If Cholesky fails or the reciprocal condition estimate drops below
    ``1/COND_LIMIT``, ``TIKHONOV_SCALE * trace(a) / n`` is added to the
    diagonal and the result is flagged ``regularized``.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{what} must be square, got shape {a.shape}")
    a = 0.5 * (a + a.T)
    n = a.shape[0]
    if n == 0:
        return SPDFactor(np.zeros((0, 0)), 1.0, False, 0.0)

    c, rcond = _cholesky(a)
    if c is not None and rcond >= 1.0 / COND_LIMIT:
        return SPDFactor(c, rcond, False, 0.0)

    trace = float(np.trace(a))
    if not np.isfinite(trace) or trace <= 0.0:
        raise IllConditionedMoments(f"{what} has non-positive trace", rcond)
    ridge = TIKHONOV_SCALE * trace / n
    loaded = a + ridge * np.eye(n)
    c2, rcond2 = _cholesky(loaded)
    if c2 is None or rcond2 < 1.0 / (COND_LIMIT * 1e3):
        raise IllConditionedMoments(f"{what} is singular beyond regularisation", rcond)
    return SPDFactor(c2, rcond2, True, ridge)


def spd_solve(a: np.ndarray, b: np.ndarray, what: str = "moment matrix"):
    """Solve ``a x = b`` for symmetric PSD ``a``; returns ``(x, factor)``."""
    f = spd_factor(a, what)
    return f.solve(np.asarray(b, dtype=float)), f


def sym_psd_min_eig(a: np.ndarray) -> float:
    a = np.asarray(a, dtype=float)
    return float(np.linalg.eigvalsh(0.5 * (a + a.T))[0])
