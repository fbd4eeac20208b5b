"""Moment sets: the finite-order correlations that drive filter synthesis.

All moments are raw (non-central) expectations. The constant feature is
part of the feature set, so ``mean_Y`` is simply the constant row of
``C_Y`` and ``mean_x`` the constant column of ``C_xY``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .errors import InsufficientData, InvalidArgument, InvalidGrid, InvalidModel
from .features import FeatureSet, enumerate_features, evaluate_features


@dataclass(frozen=True)
class MomentSet:
    """Raw moments needed by a P-th order filter.

    Attributes
    ----------
    feature_set : FeatureSet
        Features of the measurement record, constant first.
    mean_x : ndarray, shape (J,)
    mean_Y : ndarray, shape (M,)
        Feature means; ``mean_Y[0] == 1``.
    C_x : ndarray, shape (J, J)
        ``<x x^T>``.
    C_xY : ndarray, shape (J, M)
        ``<x Y^T>`` over all features.
    C_Y : ndarray, shape (M, M)
        ``<Y Y^T>`` over all features.
    """

    feature_set: FeatureSet
    mean_x: np.ndarray
    mean_Y: np.ndarray
    C_x: np.ndarray
    C_xY: np.ndarray
    C_Y: np.ndarray

    def __post_init__(self):
        M = self.feature_set.size
        J = np.shape(self.mean_x)[0]
        shapes = {
            "mean_Y": (np.shape(self.mean_Y), (M,)),
            "C_x": (np.shape(self.C_x), (J, J)),
            "C_xY": (np.shape(self.C_xY), (J, M)),
            "C_Y": (np.shape(self.C_Y), (M, M)),
        }
        for name, (got, want) in shapes.items():
            if got != want:
                raise InvalidArgument(f"{name} has shape {got}, expected {want}")

    @property
    def J(self) -> int:
        return len(self.mean_x)

    @property
    def M(self) -> int:
        return self.feature_set.size

    @property
    def P(self) -> int:
        return self.feature_set.P

    def restrict(self, P: int) -> "MomentSet":
        """Moments of the order-P sub-problem (drops features of degree > P)."""
        if P > self.P:
            raise InvalidArgument(f"cannot raise order {self.P} to {P}")
        sub = enumerate_features(self.feature_set.K, P)
        cols = np.array([self.feature_set.position(mu) for mu in sub])
        return MomentSet(
            sub,
            self.mean_x,
            self.mean_Y[cols],
            self.C_x,
            self.C_xY[:, cols],
            self.C_Y[np.ix_(cols, cols)],
        )


@dataclass(frozen=True)
class SampleDataset:
    """Paired training samples: row i holds x_i (length J) and y_i (length K)."""

    x_samples: np.ndarray
    y_samples: np.ndarray

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x_samples, dtype=float))
        y = np.atleast_2d(np.asarray(self.y_samples, dtype=float))
        if x.shape[0] != y.shape[0]:
            raise InvalidArgument(f"row counts differ: x has {x.shape[0]}, y has {y.shape[0]}")
        if x.shape[0] < 1:
            raise InsufficientData("dataset is empty")
        object.__setattr__(self, "x_samples", x)
        object.__setattr__(self, "y_samples", y)

    @property
    def n_samples(self) -> int:
        return self.x_samples.shape[0]

    @classmethod
    def from_csv(cls, path) -> "SampleDataset":
        """Read a header row ``x_1..x_J,y_1..y_K`` followed by one sample per row."""
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = [h.strip() for h in next(reader)]
            except StopIteration:
                raise InvalidArgument(f"{path}: empty file") from None
            rows = [row for row in reader if row]
        xcols = [i for i, h in enumerate(header) if h.startswith("x_")]
        ycols = [i for i, h in enumerate(header) if h.startswith("y_")]
        if not xcols or not ycols or len(xcols) + len(ycols) != len(header):
            raise InvalidArgument(f"{path}: header must be x_1..x_J,y_1..y_K, got {header}")
        xcols.sort(key=lambda i: int(header[i][2:]))
        ycols.sort(key=lambda i: int(header[i][2:]))
        try:
            data = np.array([[float(v) for v in row] for row in rows], dtype=float)
        except ValueError as exc:
            raise InvalidArgument(f"{path}: {exc}") from exc
        if data.ndim != 2 or data.shape[1] != len(header):
            raise InvalidArgument(f"{path}: ragged rows")
        return cls(data[:, xcols], data[:, ycols])

    def to_csv(self, path) -> None:
        J, K = self.x_samples.shape[1], self.y_samples.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x_{j + 1}" for j in range(J)] + [f"y_{k + 1}" for k in range(K)])
            for xr, yr in zip(self.x_samples, self.y_samples):
                w.writerow([repr(float(v)) for v in xr] + [repr(float(v)) for v in yr])


def sample_moments(data: SampleDataset, P: int) -> MomentSet:
    """Sample averages (1/n convention) of every product the order-P filter needs."""
    n = data.n_samples
    if n < 2:
        raise InsufficientData(f"need at least 2 samples, got {n}")
    fs = enumerate_features(data.y_samples.shape[1], P)
    phi = evaluate_features(data.y_samples, fs)
    x = data.x_samples
    C_Y = phi.T @ phi / n
    C_Y = 0.5 * (C_Y + C_Y.T)
    C_x = x.T @ x / n
    C_x = 0.5 * (C_x + C_x.T)
    return MomentSet(
        feature_set=fs,
        mean_x=x.mean(axis=0),
        mean_Y=phi.mean(axis=0),
        C_x=C_x,
        C_xY=x.T @ phi / n,
        C_Y=C_Y,
    )


def _first_order(C_x, C_xy, C_y, mean_x=None, mean_y=None) -> MomentSet:
    """Assemble a P=1 MomentSet from second-order blocks (raw moments)."""
    J, K = C_xy.shape
    mean_x = np.zeros(J) if mean_x is None else np.asarray(mean_x, dtype=float)
    mean_y = np.zeros(K) if mean_y is None else np.asarray(mean_y, dtype=float)
    mean_Y = np.concatenate([[1.0], mean_y])
    C_xY = np.hstack([mean_x[:, None], C_xy])
    C_Y = np.empty((K + 1, K + 1))
    C_Y[0, :] = mean_Y
    C_Y[:, 0] = mean_Y
    C_Y[1:, 1:] = C_y
    return MomentSet(enumerate_features(K, 1), mean_x, mean_Y, C_x, C_xY, C_Y)


def check_causal(g: np.ndarray) -> None:
    """Require g[k, j] == 0 whenever t_k <= tau_j (same grid for both)."""
    K, J = g.shape
    k, j = np.indices((K, J))
    if np.any(g[j >= k] != 0.0):
        raise InvalidModel("response matrix g must be strictly lower-triangular (causal)")


def gaussian_linear_moments(g, C_x, C_y0, dt: float) -> MomentSet:
    """P=1 moments of the linear-response model ``y = y0 + dt * g @ x``.

    ``C_xy = dt C_x g^T`` and ``C_y = dt^2 g C_x g^T + C_y0``; x and y0 are
    zero-mean and uncorrelated.
    """
    g = np.atleast_2d(np.asarray(g, dtype=float))
    C_x = np.atleast_2d(np.asarray(C_x, dtype=float))
    C_y0 = np.atleast_2d(np.asarray(C_y0, dtype=float))
    K, J = g.shape
    if C_x.shape != (J, J) or C_y0.shape != (K, K):
        raise InvalidModel(f"shape mismatch: g {g.shape}, C_x {C_x.shape}, C_y0 {C_y0.shape}")
    check_causal(g)
    C_xy = dt * C_x @ g.T
    C_y = dt**2 * g @ C_x @ g.T + C_y0
    return _first_order(C_x, C_xy, 0.5 * (C_y + C_y.T))


# --------------------------------------------------------------------------
# kernels on a uniform time grid

Kernel = Callable[[np.ndarray, np.ndarray], np.ndarray]


class WhiteNoise:
    """Delta-correlated kernel ``power * delta(t - tau)``.

    On a grid of step ``dt`` it discretises to ``power / dt`` on coincident
    points (rectangle rule), zero elsewhere. Add it to a smooth kernel with
    ``+`` to model signal plus white measurement noise.
    """

    def __init__(self, power: float):
        self.power = float(power)

    def discretize(self, rows: np.ndarray, cols: np.ndarray, dt: float) -> np.ndarray:
        return (self.power / dt) * np.isclose(rows[:, None], cols[None, :], rtol=0, atol=1e-9 * dt)

    def __add__(self, other):
        return _KernelSum(self, other)

    __radd__ = __add__

    def __repr__(self):
        return f"WhiteNoise({self.power!r})"


class _KernelSum:
    def __init__(self, *parts):
        self.parts = parts

    def discretize(self, rows, cols, dt):
        return sum(discretize_kernel(p, rows, cols, dt) for p in self.parts)

    def __add__(self, other):
        return _KernelSum(*self.parts, other)

    __radd__ = __add__


def discretize_kernel(fn, rows: np.ndarray, cols: np.ndarray, dt: float) -> np.ndarray:
    """Evaluate ``fn(t, tau)`` on the outer product of ``rows`` and ``cols``."""
    if hasattr(fn, "discretize"):
        return np.asarray(fn.discretize(rows, cols, dt), dtype=float)
    out = np.asarray(fn(rows[:, None], cols[None, :]), dtype=float)
    return np.broadcast_to(out, (len(rows), len(cols))).copy()


def grid_step(grid) -> float:
    """Return the spacing of a strictly increasing uniform grid."""
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) < 1:
        raise InvalidGrid("grid must be a non-empty 1-d array")
    if len(grid) == 1:
        raise InvalidGrid("grid needs at least two points to define a step")
    d = np.diff(grid)
    if np.any(d <= 0):
        raise InvalidGrid("grid must be strictly increasing")
    dt = float(d.mean())
    if not np.allclose(d, dt, rtol=1e-6, atol=0):
        raise InvalidGrid("grid spacing is not uniform")
    return dt


def kernel_moments(
    C_x_fn,
    C_xy_fn,
    C_y_fn,
    grid,
    x_grid: Optional[np.ndarray] = None,
) -> MomentSet:
    """P=1 zero-mean moments from correlation kernels sampled on a grid.

    Parameters
    ----------
    C_x_fn, C_xy_fn, C_y_fn : callable or WhiteNoise
        Kernels ``f(t, tau)``, vectorised over broadcast arrays.
    grid : array_like
        Uniform measurement times tau_k.
    x_grid : array_like, optional
        Times at which x is estimated; defaults to ``grid``.
    """
    grid = np.asarray(grid, dtype=float)
    dt = grid_step(grid)
    xg = grid if x_grid is None else np.atleast_1d(np.asarray(x_grid, dtype=float))
    C_x = discretize_kernel(C_x_fn, xg, xg, dt)
    C_xy = discretize_kernel(C_xy_fn, xg, grid, dt)
    C_y = discretize_kernel(C_y_fn, grid, grid, dt)
    return _first_order(C_x, C_xy, C_y)
