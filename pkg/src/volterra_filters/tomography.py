"""Linear (first-order Volterra) quantum state tomography.

States are parameterised as ``rho = I/d + sum_a z_a E_a`` with an
orthonormal, traceless Hermitian basis E. Measurements are linear,
``y = A z + y0``, and the estimand is ``x = B z``. With this normalisation
a qubit is physical iff ``|z| <= 1/sqrt(2)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import linalg

from ._linalg import spd_factor
from .errors import IllConditionedMoments, InvalidArgument, InvalidModel, UnboundedBound
from .estimation import ErrorCovariance, information_form_error
from .moments import MomentSet, _first_order

BLOCH_RADIUS = 1.0 / math.sqrt(2.0)


@dataclass(frozen=True)
class HermitianBasis:
    d: int
    matrices: np.ndarray  # shape (d*d - 1, d, d), complex

    def __len__(self):
        return len(self.matrices)


def gellmann_basis(d: int) -> HermitianBasis:
    """Generalised Gell-Mann matrices normalised to ``tr(E_a E_b) = delta_ab``.

    Order: for each pair j < k the symmetric then the antisymmetric
    element, followed by the d-1 diagonal elements. For d = 2 this is
    (sigma_x, sigma_y, sigma_z) / sqrt(2).
    """
    if int(d) != d or d < 2:
        raise InvalidArgument(f"dimension must be an integer >= 2, got {d}")
    d = int(d)
    mats = []
    s = 1.0 / math.sqrt(2.0)
    for j in range(d):
        for k in range(j + 1, d):
            sym = np.zeros((d, d), complex)
            sym[j, k] = sym[k, j] = s
            anti = np.zeros((d, d), complex)
            anti[j, k] = -1j * s
            anti[k, j] = 1j * s
            mats += [sym, anti]
    for l in range(1, d):
        diag = np.zeros(d)
        diag[:l] = 1.0
        diag[l] = -l
        mats.append(np.diag(diag / math.sqrt(l * (l + 1))).astype(complex))
    return HermitianBasis(d, np.array(mats))


def density_from_params(z, basis: HermitianBasis) -> np.ndarray:
    """``I/d + sum_a z_a E_a``; Hermitian with unit trace, not necessarily PSD."""
    z = np.asarray(z, dtype=float)
    if z.shape != (len(basis),):
        raise InvalidArgument(f"expected {len(basis)} parameters, got shape {z.shape}")
    return np.eye(basis.d) / basis.d + np.tensordot(z, basis.matrices, axes=1)


def params_from_density(rho, basis: HermitianBasis) -> np.ndarray:
    """Inverse of :func:`density_from_params`: ``z_a = tr(E_a rho)``."""
    rho = np.asarray(rho)
    return np.real(np.einsum("aij,ji->a", basis.matrices, rho))


def project_physical(z_est, basis: HermitianBasis) -> np.ndarray:
    """Nearest physical parameters by eigenvalue clipping and trace renormalisation."""
    rho = density_from_params(z_est, basis)
    w, v = np.linalg.eigh(rho)
    if w[0] >= 0:
        return np.asarray(z_est, dtype=float).copy()
    w = np.clip(w, 0.0, None)
    w /= w.sum()
    return params_from_density((v * w) @ v.conj().T, basis)


@dataclass(frozen=True)
class TomographyModel:
    """``y = A z + y0`` with estimand ``x = B z``.

    ``C_z`` is the central prior covariance of z and ``C_y0`` the noise
    covariance.
    """

    A: np.ndarray
    B: np.ndarray
    C_y0: np.ndarray
    mean_z: np.ndarray
    C_z: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        C_y0 = np.atleast_2d(np.asarray(self.C_y0, dtype=float))
        mean_z = np.atleast_1d(np.asarray(self.mean_z, dtype=float))
        C_z = np.atleast_2d(np.asarray(self.C_z, dtype=float))
        n_y, n_z = A.shape
        if B.shape[1] != n_z or C_y0.shape != (n_y, n_y) or mean_z.shape != (n_z,) or C_z.shape != (n_z, n_z):
            raise InvalidModel(
                f"inconsistent shapes: A {A.shape}, B {B.shape}, C_y0 {C_y0.shape}, "
                f"mean_z {mean_z.shape}, C_z {C_z.shape}"
            )
        for name, arr in (("A", A), ("B", B), ("C_y0", C_y0), ("mean_z", mean_z), ("C_z", C_z)):
            object.__setattr__(self, name, arr)

    @classmethod
    def from_dict(cls, cfg: dict) -> "TomographyModel":
        """Build from the JSON schema documented in the README."""
        try:
            A = np.asarray(cfg["A"], dtype=float)
            n_y, n_z = A.shape
            B = np.asarray(cfg.get("B", np.eye(n_z)), dtype=float)
            if "C_y0" in cfg:
                C_y0 = np.asarray(cfg["C_y0"], dtype=float)
            else:
                C_y0 = float(cfg["noise_var"]) * np.eye(n_y)
            prior = cfg.get("prior", {"type": "bloch"})
            kind = prior.get("type", "moments")
            if kind == "bloch":
                if n_z != 3:
                    raise InvalidModel("the Bloch-ball prior needs 3 parameters (d = 2)")
                mean_z, C_z = np.zeros(3), np.eye(3) * BLOCH_RADIUS**2 / 5
            elif kind == "isotropic":
                mean_z = np.asarray(prior.get("mean_z", np.zeros(n_z)), dtype=float)
                C_z = float(prior["c"]) * np.eye(n_z)
            elif kind == "moments":
                mean_z = np.asarray(prior["mean_z"], dtype=float)
                C_z = np.asarray(prior["C_z"], dtype=float)
            else:
                raise InvalidModel(f"unknown prior type {kind!r}")
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidModel(f"bad tomography config: {exc}") from exc
        return cls(A, B, C_y0, mean_z, C_z)

    @classmethod
    def from_json(cls, path) -> "TomographyModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def equivalent_moments(self) -> MomentSet:
        """Raw P=1 moments of the estimation problem for x = Bz given y."""
        raw_z = self.C_z + np.outer(self.mean_z, self.mean_z)
        return _first_order(
            self.B @ raw_z @ self.B.T,
            self.B @ raw_z @ self.A.T,
            self.A @ raw_z @ self.A.T + self.C_y0,
            mean_x=self.B @ self.mean_z,
            mean_y=self.A @ self.mean_z,
        )


def qst_filter(model: TomographyModel) -> Tuple[np.ndarray, np.ndarray]:
    """Gain and offset of the optimal linear estimator.

    ``gain = B C_z A^T (A C_z A^T + C_y0)^-1`` and
    ``offset = B<z> - gain A<z>``, so ``x_est = offset + gain @ y``.
    """
    A, B, C_z = model.A, model.B, model.C_z
    innov = A @ C_z @ A.T + model.C_y0
    gain = spd_factor(innov, "innovation covariance").solve(A @ C_z @ B.T).T
    offset = B @ model.mean_z - gain @ (A @ model.mean_z)
    return gain, offset


def qst_estimate(model: TomographyModel, y) -> np.ndarray:
    gain, offset = qst_filter(model)
    return offset + np.asarray(y, dtype=float) @ gain.T


def qst_error(model: TomographyModel) -> ErrorCovariance:
    """Error covariance ``B (C_z^-1 + A^T C_y0^-1 A)^-1 B^T``."""
    try:
        inner = information_form_error(model.C_z, model.A, model.C_y0, 1.0).sigma
    except InvalidModel as exc:
        raise IllConditionedMoments(str(exc)) from exc
    sigma = model.B @ inner @ model.B.T
    return ErrorCovariance(0.5 * (sigma + sigma.T), 1, "optimal")


def minimax_error_bound(model: TomographyModel) -> np.ndarray:
    """Limit of :func:`qst_error` as the prior covariance grows without bound."""
    A = model.A
    try:
        cy = linalg.cho_factor(model.C_y0, lower=True)
    except linalg.LinAlgError as exc:
        raise InvalidModel("noise covariance is not positive definite") from exc
    fisher = A.T @ linalg.cho_solve(cy, A)
    fisher = 0.5 * (fisher + fisher.T)
    rank = np.linalg.matrix_rank(fisher, hermitian=True)
    if rank < fisher.shape[0]:
        raise UnboundedBound(f"measurement matrix has rank {rank} < {fisher.shape[0]} parameters")
    inner = linalg.cho_solve(linalg.cho_factor(fisher, lower=True), np.eye(len(fisher)))
    bound = model.B @ inner @ model.B.T
    return 0.5 * (bound + bound.T)


def sample_bloch_ball(n: int, rng: np.random.Generator, radius: float = BLOCH_RADIUS) -> np.ndarray:
    """``n`` points uniform in the solid ball of the given radius in R^3."""
    v = rng.standard_normal((n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v * (radius * rng.random(n) ** (1.0 / 3.0))[:, None]


def prior_moments_bloch(n_samples: int, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Monte Carlo mean and central covariance of the uniform Bloch-ball prior."""
    if n_samples < 10_000:
        raise InvalidArgument("use at least 10^4 samples")
    z = sample_bloch_ball(n_samples, np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(2,))))
    mean = z.mean(axis=0)
    dz = z - mean
    return mean, dz.T @ dz / n_samples


def simulate_tomography(
    model: TomographyModel, n_trials: int, seed: int, prior: str = "gaussian"
) -> Tuple[np.ndarray, np.ndarray]:
    """Draw ``(z, y)`` pairs with Gaussian noise.

    ``prior`` is ``"gaussian"`` (moments of the model) or ``"bloch"``
    (uniform Bloch ball, d = 2 only).
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(3,)))
    n_z = model.A.shape[1]
    if prior == "bloch":
        if n_z != 3:
            raise InvalidArgument("the Bloch-ball prior is defined for d = 2 only")
        z = sample_bloch_ball(n_trials, rng)
    elif prior == "gaussian":
        z = rng.multivariate_normal(model.mean_z, model.C_z, size=n_trials, method="eigh")
    else:
        raise InvalidArgument(f"unknown prior {prior!r}")
    noise = rng.multivariate_normal(np.zeros(len(model.C_y0)), model.C_y0, size=n_trials, method="eigh")
    return z, z @ model.A.T + noise
