"""Optimal Volterra filters, their error covariances, and related identities.

The filter is linear in the feature vector Y = y^(P) (constant included),
so the optimum solves the normal equations ``C_xY = H C_Y`` and its error
is ``C_x - H C_xY^T``. Every routine here works on raw moments.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy import linalg

from ._linalg import spd_factor
from .errors import InvalidArgument, InvalidModel
from .features import FeatureSet, enumerate_features, evaluate_features, format_index, parse_index
from .moments import MomentSet, grid_step, kernel_moments


@dataclass(frozen=True)
class VolterraFilter:
    """Estimator ``x(j) = h0(j) + sum_mu H(j, mu) Y(mu)``.

    ``H`` covers the non-constant features only; the constant term lives in
    ``h0``. ``regularized`` records whether the synthesis had to load the
    diagonal of ``C_Y``, and ``rcond`` the reciprocal condition estimate.
    """

    feature_set: FeatureSet
    h0: np.ndarray
    H: np.ndarray
    regularized: bool = False
    rcond: float = 1.0

    def __post_init__(self):
        h0 = np.atleast_1d(np.asarray(self.h0, dtype=float))
        H = np.asarray(self.H, dtype=float).reshape(len(h0), self.feature_set.size - 1)
        if not (np.all(np.isfinite(h0)) and np.all(np.isfinite(H))):
            raise InvalidArgument("filter coefficients must be finite")
        object.__setattr__(self, "h0", h0)
        object.__setattr__(self, "H", H)

    @property
    def J(self) -> int:
        return len(self.h0)

    def full(self) -> np.ndarray:
        """Coefficient matrix over all features, constant column first."""
        return np.hstack([self.h0[:, None], self.H])

    def to_csv(self, path=None) -> str:
        """Serialise as ``j,feature,coefficient`` rows under a ``# K,P,J`` line.

        Returns the text; also writes it to ``path`` when given.
        """
        buf = io.StringIO()
        fs = self.feature_set
        buf.write(f"# K={fs.K},P={fs.P},J={self.J}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["j", "feature", "coefficient"])
        full = self.full()
        for j in range(self.J):
            for label, c in zip(fs.labels(), full[j]):
                w.writerow([j + 1, label, repr(float(c))])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path) -> "VolterraFilter":
        with open(path, newline="") as fh:
            first = fh.readline()
            meta = _parse_header(first)
            rows = list(csv.DictReader(fh))
        try:
            K, P, J = int(meta["K"]), int(meta["P"]), int(meta["J"])
        except (KeyError, ValueError) as exc:
            raise InvalidArgument(f"{path}: header must read '# K=..,P=..,J=..'") from exc
        fs = enumerate_features(K, P)
        full = np.zeros((J, fs.size))
        seen = np.zeros_like(full, dtype=bool)
        for row in rows:
            j = int(row["j"]) - 1
            col = fs.position(parse_index(row["feature"]))
            full[j, col] = float(row["coefficient"])
            seen[j, col] = True
        if not seen.all():
            raise InvalidArgument(f"{path}: missing coefficients")
        return cls(fs, full[:, 0], full[:, 1:])


def _parse_header(line: str) -> dict:
    line = line.strip()
    if not line.startswith("#"):
        raise InvalidArgument("missing '#' metadata line")
    out = {}
    for part in line[1:].split(","):
        if "=" in part:
            k, v = part.split("=", 1)
            out[k.strip()] = v.strip()
    return out


@dataclass(frozen=True)
class ErrorCovariance:
    """Error covariance ``<(x - x_est)(x - x_est)^T>``.

    ``provenance`` is ``"optimal"`` for the minimum over filters of the
    given order, ``"evaluated"`` for the error of a particular filter.
    """

    sigma: np.ndarray
    order: int
    provenance: str = "optimal"

    @property
    def diagonal(self) -> np.ndarray:
        return np.diag(self.sigma).copy()

    @property
    def trace(self) -> float:
        return float(np.trace(self.sigma))


def _sym(a):
    return 0.5 * (a + a.T)


def solve_optimal_filter(m: MomentSet) -> VolterraFilter:
    """Solve ``C_xY = H C_Y`` for the minimum-mean-square order-P filter.

    Raises
    ------
    IllConditionedMoments
        If ``C_Y`` cannot be factorised even after diagonal loading.
    """
    f = spd_factor(m.C_Y, "feature correlation C_Y")
    Hfull = f.solve(m.C_xY.T).T
    return VolterraFilter(m.feature_set, Hfull[:, 0], Hfull[:, 1:], f.regularized, f.rcond)


def evaluate_filter(f: VolterraFilter, record) -> np.ndarray:
    """Estimate x from one record (shape ``(K,)``) or a batch (``(n, K)``)."""
    Y = evaluate_features(record, f.feature_set)
    return Y @ f.full().T


def _check_same_features(m: MomentSet, f: VolterraFilter):
    if m.feature_set.indices != f.feature_set.indices or m.J != f.J:
        raise InvalidArgument("filter and moment set use different feature sets or outputs")


def error_at_filter(m: MomentSet, f: VolterraFilter) -> ErrorCovariance:
    """Error covariance of an arbitrary filter under the moments ``m``."""
    _check_same_features(m, f)
    H = f.full()
    cross = H @ m.C_xY.T
    sigma = m.C_x - cross - cross.T + H @ m.C_Y @ H.T
    return ErrorCovariance(_sym(sigma), m.P, "evaluated")


def optimal_error(m: MomentSet) -> ErrorCovariance:
    """Minimum error covariance reachable at the order of ``m``."""
    f = solve_optimal_filter(m)
    sigma = m.C_x - f.full() @ m.C_xY.T
    return ErrorCovariance(_sym(sigma), m.P, "optimal")


def continuous_linear_filter(
    C_x_fn, C_xy_fn, C_y_fn, grid, x_grid=None
) -> Tuple[np.ndarray, np.ndarray]:
    """Optimal linear filter for zero-mean processes given as kernels.

    The integral equation ``C_xy(t, tau) = int ds h(t, s) C_y(s, tau)`` is
    discretised with the rectangle rule on ``grid``; delta kernels should
    be passed as :class:`~volterra_filters.moments.WhiteNoise`.

    Returns
    -------
    h1 : ndarray, shape (len(x_grid), len(grid))
        Filter kernel ``h1(t, tau)`` (per unit time).
    error : ndarray, shape (len(x_grid),)
        Mean-square error ``C_x(t, t) - int dtau h1(t, tau) C_xy(t, tau)``.
    """
    dt = grid_step(grid)
    m = kernel_moments(C_x_fn, C_xy_fn, C_y_fn, grid, x_grid)
    f = solve_optimal_filter(m)
    h1 = f.H / dt
    C_xy = m.C_xY[:, 1:]
    error = np.diag(m.C_x) - dt * np.sum(h1 * C_xy, axis=1)
    return h1, error


def _chol(a, what):
    try:
        return linalg.cho_factor(_sym(np.asarray(a, dtype=float)), lower=True)
    except linalg.LinAlgError as exc:
        raise InvalidModel(f"{what} is not positive definite") from exc


def _linear_model(C_x, g, C_y0):
    C_x = np.atleast_2d(np.asarray(C_x, dtype=float))
    g = np.atleast_2d(np.asarray(g, dtype=float))
    C_y0 = np.atleast_2d(np.asarray(C_y0, dtype=float))
    K, J = g.shape
    if C_x.shape != (J, J) or C_y0.shape != (K, K):
        raise InvalidModel(f"shape mismatch: g {g.shape}, C_x {C_x.shape}, C_y0 {C_y0.shape}")
    return C_x, g, C_y0


def information_form_error(C_x, g, C_y0, dt: float) -> ErrorCovariance:
    """Linear-filter error ``(C_x^-1 + dt^2 g^T C_y0^-1 g)^-1``.

    This is the matrix-inversion-lemma form of :func:`direct_form_error`.
    """
    C_x, g, C_y0 = _linear_model(C_x, g, C_y0)
    cx = _chol(C_x, "C_x")
    cy = _chol(C_y0, "C_y0")
    info = linalg.cho_solve(cx, np.eye(len(C_x))) + dt**2 * g.T @ linalg.cho_solve(cy, g)
    sigma = linalg.cho_solve(_chol(info, "information matrix"), np.eye(len(C_x)))
    return ErrorCovariance(_sym(sigma), 1, "optimal")


def direct_form_error(C_x, g, C_y0, dt: float) -> ErrorCovariance:
    """Linear-filter error ``C_x - dt^2 C_x g^T (dt^2 g C_x g^T + C_y0)^-1 g C_x``."""
    C_x, g, C_y0 = _linear_model(C_x, g, C_y0)
    innov = dt**2 * g @ C_x @ g.T + C_y0
    gain_t = linalg.cho_solve(_chol(innov, "innovation covariance"), g @ C_x)
    sigma = C_x - dt**2 * C_x @ g.T @ gain_t
    return ErrorCovariance(_sym(sigma), 1, "optimal")


@dataclass(frozen=True)
class UncertaintyCheck:
    """Outcome of testing ``g^T C_y0^-1 g <= (4 / hbar^2) C_q0``.

    ``slack`` is the smallest eigenvalue of the difference (right minus
    left); ``eigenvalues`` holds the full ascending spectrum.
    """

    holds: bool
    slack: float
    eigenvalues: np.ndarray


def check_matrix_uncertainty(g, C_y0, C_q0, hbar: float = 1.0, tol: float = 1e-10) -> UncertaintyCheck:
    """Check the matrix uncertainty relation between an output and a probe.

    The relation holds when the difference is PSD, up to ``tol`` relative
    to the largest eigenvalue magnitude of either side.
    """
    g = np.atleast_2d(np.asarray(g, dtype=float))
    C_y0 = np.atleast_2d(np.asarray(C_y0, dtype=float))
    C_q0 = np.atleast_2d(np.asarray(C_q0, dtype=float))
    K, J = g.shape
    if C_y0.shape != (K, K) or C_q0.shape != (J, J):
        raise InvalidModel(f"shape mismatch: g {g.shape}, C_y0 {C_y0.shape}, C_q0 {C_q0.shape}")
    lhs = g.T @ linalg.cho_solve(_chol(C_y0, "C_y0"), g)
    rhs = (4.0 / hbar**2) * C_q0
    eig = np.linalg.eigvalsh(_sym(rhs - lhs))
    scale = max(np.abs(np.linalg.eigvalsh(_sym(lhs))).max(), np.abs(np.linalg.eigvalsh(_sym(rhs))).max(), 1e-300)
    return UncertaintyCheck(bool(eig[0] >= -tol * scale), float(eig[0]), eig)
