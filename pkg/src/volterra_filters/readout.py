"""Qubit readout: decaying telegraph signal in white noise.

Under H0 the record is pure noise; under H1 it is ``S x(t) + noise`` where
x starts at 1 and decays to 0 at rate 1/T1. On the grid ``t_k = k dt``
(k = 0..N-1, N = T/dt) white noise of power Pi has per-sample variance
``Pi / dt``, and time integrals become ``dt``-weighted sums.

Monte Carlo records are generated from per-trial random streams derived
from ``(seed, stream, hypothesis, trial)``, so any batch or ordering of
trials gives bit-identical results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from statistics import NormalDist
from typing import Callable, Dict, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

from ._linalg import spd_factor
from .detection import DetectionRule, HypothesisMoments
from .errors import InvalidArgument, InvalidModel
from .features import enumerate_features

Statistic = Callable[[np.ndarray], np.ndarray]

EVAL_STREAM = 0
TUNE_STREAM = 1


@dataclass(frozen=True)
class ReadoutModel:
    """Telegraph readout parameters on a uniform grid starting at t = 0.

    Attributes
    ----------
    T1 : float
        Decay time of the excited state.
    S : float
        Signal amplitude.
    Pi : float
        White-noise power (signal^2 x time).
    T : float
        Record duration.
    dt : float
        Grid step.
    pi0, pi1 : float
        Prior probabilities of H0 and H1.
    """

    T1: float
    S: float
    Pi: float
    T: float
    dt: float
    pi0: float = 0.5
    pi1: float = 0.5

    def __post_init__(self):
        for name in ("T1", "Pi", "T", "dt"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise InvalidModel(f"{name} must be positive, got {v}")
        if not (np.isfinite(self.S) and self.S >= 0):
            raise InvalidModel(f"S must be nonnegative, got {self.S}")
        if self.dt > self.T:
            raise InvalidModel("dt must not exceed T")
        if not (0 <= self.pi0 <= 1 and abs(self.pi0 + self.pi1 - 1) < 1e-12):
            raise InvalidModel("priors must lie in [0, 1] and sum to 1")

    @classmethod
    def from_snr(
        cls,
        snr: float,
        T1: float = 1.0,
        Pi: float = 1.0,
        T_over_T1: float = 5.0,
        dt_over_T1: float = 1e-3,
        pi0: float = 0.5,
    ) -> "ReadoutModel":
        """Model with ``S = sqrt(snr Pi / T1)``."""
        if snr < 0:
            raise InvalidModel("snr must be nonnegative")
        return cls(T1, math.sqrt(snr * Pi / T1), Pi, T_over_T1 * T1, dt_over_T1 * T1, pi0, 1.0 - pi0)

    @property
    def snr(self) -> float:
        return self.S**2 * self.T1 / self.Pi

    @property
    def snr_db(self) -> float:
        return 10.0 * math.log10(self.snr)

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def grid(self) -> np.ndarray:
        return np.arange(self.n_steps) * self.dt

    @property
    def noise_var(self) -> float:
        """Per-sample noise variance ``Pi / dt``."""
        return self.Pi / self.dt


@dataclass(frozen=True)
class MonteCarloResult:
    """Prior-weighted error-rate estimate with a 95 % Wilson interval.

    ``trials`` counts records over both hypotheses, split evenly.
    """

    trials: int
    errors0: int
    errors1: int
    pe_hat: float
    ci_low: float
    ci_high: float
    seed: int
    threshold: float = 0.0
    pi0: float = 0.5

    @property
    def n_per_hypothesis(self) -> int:
        return self.trials // 2

    @property
    def std_error(self) -> float:
        n = self.n_per_hypothesis
        p0, p1 = self.errors0 / n, self.errors1 / n
        w0, w1 = self.pi0, 1.0 - self.pi0
        return math.sqrt((w0**2 * p0 * (1 - p0) + w1**2 * p1 * (1 - p1)) / n)


# --------------------------------------------------------------------------
# moments


def telegraph_mean_cov(model: ReadoutModel, grid: Optional[np.ndarray] = None):
    """Mean ``exp(-t/T1)`` and covariance ``exp(-max/T1) - exp(-(t+tau)/T1)``."""
    t = model.grid if grid is None else np.asarray(grid, dtype=float)
    if np.any(t < 0):
        raise InvalidArgument("times must be nonnegative")
    return np.exp(-t / model.T1), _telegraph_cov(t, model.T1)


def _telegraph_cov(t: np.ndarray, T1: float) -> np.ndarray:
    e = np.exp(-t / T1)
    # exp(-max(t, tau)/T1) == min(e_t, e_tau)
    return np.minimum.outer(e, e) - np.outer(e, e)


@lru_cache(maxsize=4)
def _cached_cov(n: int, dt: float, T1: float) -> np.ndarray:
    c = _telegraph_cov(np.arange(n) * dt, T1)
    c.setflags(write=False)
    return c


def _model_cov(model: ReadoutModel) -> np.ndarray:
    return _cached_cov(model.n_steps, model.dt, model.T1)


def readout_hypothesis_moments(model: ReadoutModel) -> HypothesisMoments:
    """First-order detection moments: ``<y>_1 = S<x>``, ``C1 = C0 + S^2 C_x``."""
    mean, _ = telegraph_mean_cov(model)
    Cx = _model_cov(model)
    n = model.n_steps
    C0 = model.noise_var * np.eye(n)
    C1 = C0 + model.S**2 * Cx
    return HypothesisMoments(
        enumerate_features(n, 1), np.zeros(n), model.S * mean, C0, C1, model.pi0, model.pi1
    )


# --------------------------------------------------------------------------
# simulation


def simulate_path(model: ReadoutModel, rng: np.random.Generator) -> np.ndarray:
    """Binary decay path on the grid; starts at 1, absorbing at 0.

    The per-step decay probability is ``1 - exp(-dt/T1)``; the number of
    steps spent in the excited state is drawn directly as a geometric
    variate, which gives the same law as flipping step by step.
    """
    n = model.n_steps
    q = -math.expm1(-model.dt / model.T1)
    alive = rng.geometric(q)
    return (np.arange(n) < alive).astype(float)


def simulate_record(model: ReadoutModel, hypothesis: int, rng: np.random.Generator) -> np.ndarray:
    """One measurement record under ``hypothesis`` (0 or 1)."""
    if hypothesis not in (0, 1):
        raise InvalidArgument("hypothesis must be 0 or 1")
    signal = model.S * simulate_path(model, rng) if hypothesis == 1 else 0.0
    return signal + math.sqrt(model.noise_var) * rng.standard_normal(model.n_steps)


def trial_rng(seed: int, stream: int, hypothesis: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream, hypothesis, trial)))


def simulate_records(
    model: ReadoutModel, hypothesis: int, trials: Sequence[int], seed: int, stream: int = EVAL_STREAM
) -> np.ndarray:
    """Records for the given trial indices, one independent stream each."""
    out = np.empty((len(trials), model.n_steps))
    for row, i in enumerate(trials):
        out[row] = simulate_record(model, hypothesis, trial_rng(seed, stream, hypothesis, int(i)))
    return out


# --------------------------------------------------------------------------
# R-optimal filter


def solve_fredholm_filter(model: ReadoutModel) -> np.ndarray:
    """Solve ``(S/2)<x(t)> = Pi h(t) + pi1 S^2 int C_x(t, tau) h(tau) dtau``.

    Rectangle-rule discretisation on the model grid and a dense Cholesky
    solve. Returns h on the grid.
    """
    A, b = _fredholm_system(model)
    return spd_factor(A, "Fredholm operator").solve(b)


def _fredholm_system(model: ReadoutModel):
    mean = np.exp(-model.grid / model.T1)
    A = (model.pi1 * model.S**2 * model.dt) * _model_cov(model)
    A[np.diag_indices_from(A)] += model.Pi
    return A, 0.5 * model.S * mean


def fredholm_residual(model: ReadoutModel, h: np.ndarray) -> float:
    """Relative residual ``|A h - b| / |b|`` of the discretised equation."""
    A, b = _fredholm_system(model)
    return float(np.linalg.norm(A @ h - b) / np.linalg.norm(b))


def fredholm_rule(model: ReadoutModel, h: Optional[np.ndarray] = None) -> DetectionRule:
    """Detection rule ``H = h dt`` with ``h0 = -H^T ybar``."""
    if h is None:
        h = solve_fredholm_filter(model)
    mean = np.exp(-model.grid / model.T1)
    H = h * model.dt
    delta = 0.5 * model.S * mean
    return DetectionRule(enumerate_features(model.n_steps, 1), H, -float(H @ delta), 0.0, delta, delta.copy())


def readout_bounds(model: ReadoutModel, h: Optional[np.ndarray] = None) -> Tuple[float, float]:
    """``(Q(H), R(H))`` for the Fredholm filter; R equals R_tilde there.

    Uses the diagonal/low-rank structure of C0 and C1 rather than dense
    matrices: ``H^T C0 H = (Pi/dt) |H|^2``, ``C1 = C0 + S^2 C_x``.
    """
    if h is None:
        h = solve_fredholm_filter(model)
    mean = np.exp(-model.grid / model.T1)
    H = h * model.dt
    d = float(H @ (0.5 * model.S * mean))
    v0 = model.noise_var * float(H @ H)
    v1 = v0 + model.S**2 * float(H @ (_model_cov(model) @ H))
    Q = model.pi0 * v0 / (v0 + d * d) + model.pi1 * v1 / (v1 + d * d)
    R = (model.pi0 * v0 + model.pi1 * v1) / d**2
    return Q, R


def r_optimal_statistic(h: np.ndarray, model: ReadoutModel, record) -> np.ndarray:
    """``lambda = int dt h(t) [y(t) - (S/2)<x(t)>]`` for one record or a batch."""
    y = np.asarray(record, dtype=float)
    h = np.asarray(h, dtype=float)
    if h.shape != (model.n_steps,) or y.shape[-1] != model.n_steps:
        raise InvalidArgument("filter and record must lie on the model grid")
    centre = 0.5 * model.S * np.exp(-model.grid / model.T1)
    return model.dt * ((y - centre) @ h)


# --------------------------------------------------------------------------
# likelihood-ratio test


def lrt_threshold(model: ReadoutModel) -> float:
    return math.log(model.pi0 / model.pi1)


def _lrt_logs(model: ReadoutModel, y: np.ndarray):
    """Log-weights ``log p1(t_k)``, running ``log sum_{i<=k} p1(t_i)`` and increments."""
    if y.shape[1] != model.n_steps:
        raise InvalidArgument("record must lie on the model grid")
    S, Pi, dt, T1 = model.S, model.Pi, model.dt, model.T1
    # log p1 increment over [t_k, t_k+1)
    incr = (S / Pi) * dt * y - dt * (S * S / (2 * Pi) + 1.0 / T1)
    log_p1 = np.empty_like(y)
    log_p1[:, 0] = 0.0
    np.cumsum(incr[:, :-1], axis=1, out=log_p1[:, 1:])
    run = np.logaddexp.accumulate(log_p1, axis=1)
    return log_p1, run, incr


def lrt_posterior(model: ReadoutModel, record) -> np.ndarray:
    """Posterior ``x_est(t_k) = p1 / (p0 + p1)`` given the record before t_k."""
    y = np.asarray(record, dtype=float)
    single = y.ndim == 1
    y = np.atleast_2d(y)
    log_p1, run, _ = _lrt_logs(model, y)
    log_p0 = np.empty_like(y)
    log_p0[:, 0] = -np.inf
    # p0(t_k) = (1/T1) sum_{i<k} p1(t_i) dt
    log_p0[:, 1:] = math.log(model.dt / model.T1) + run[:, :-1]
    x_est = expit(log_p1 - log_p0)
    return x_est[0] if single else x_est


def lrt_statistic(model: ReadoutModel, record, method: str = "ito") -> np.ndarray:
    """Log-likelihood ratio of H1 against H0 for one record or a batch.

    ``method="ito"`` evaluates
    ``(S/Pi) int x_est dEta - (S^2/2Pi) int x_est^2 dt`` with left-endpoint
    (non-anticipating) sums, ``dEta_k = y_k dt``, where
    ``x_est = p1 / (p0 + p1)``.

    ``method="normalizer"`` returns ``ln(p0(T) + p1(T))``, the same
    quantity written as the log of the unnormalised posterior mass; the
    two agree as ``dt -> 0``.

    p1 grows like ``exp((S/Pi) eta)`` and overflows at high SNR, so both
    weights are propagated as logarithms.
    """
    y = np.asarray(record, dtype=float)
    single = y.ndim == 1
    y = np.atleast_2d(y)
    S, Pi, dt = model.S, model.Pi, model.dt
    if method == "ito":
        x_est = lrt_posterior(model, y)
        lam = (S / Pi) * dt * np.sum(x_est * y, axis=1) - (S * S / (2 * Pi)) * dt * np.sum(x_est**2, axis=1)
    elif method == "normalizer":
        log_p1, run, incr = _lrt_logs(model, y)
        log_p1_T = log_p1[:, -1] + incr[:, -1]
        log_p0_T = math.log(dt / model.T1) + run[:, -1]
        lam = np.logaddexp(log_p0_T, log_p1_T)
    else:
        raise InvalidArgument(f"unknown method {method!r}")
    return lam[0] if single else lam


# --------------------------------------------------------------------------
# Monte Carlo


def simulate_statistics(
    model: ReadoutModel,
    statistics: Mapping[str, Statistic],
    trials_per_hypothesis: int,
    seed: int,
    stream: int = EVAL_STREAM,
    batch_size: int = 500,
) -> Dict[str, Tuple[np.ndarray, np.ndarray]]:
    """Evaluate several statistics on the same simulated records.

    Returns ``{name: (lambda_under_H0, lambda_under_H1)}``.
    """
    n = int(trials_per_hypothesis)
    out = {name: (np.empty(n), np.empty(n)) for name in statistics}
    for hyp in (0, 1):
        for start in range(0, n, batch_size):
            idx = range(start, min(start + batch_size, n))
            y = simulate_records(model, hyp, idx, seed, stream)
            for name, stat in statistics.items():
                out[name][hyp][start : start + len(idx)] = stat(y)
    return out


_Z95 = NormalDist().inv_cdf(0.975)


def wilson_interval(p: float, n: int, z: float = _Z95) -> Tuple[float, float]:
    if n <= 0:
        return 0.0, 1.0
    denom = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


def pe_from_statistics(
    lam0: np.ndarray, lam1: np.ndarray, threshold: float, pi0: float, pi1: float, seed: int
) -> MonteCarloResult:
    """Error counts at ``threshold``: false alarms under H0, misses under H1."""
    n = len(lam0)
    if len(lam1) != n or n == 0:
        raise InvalidArgument("need equal, nonzero trial counts per hypothesis")
    e0 = int(np.count_nonzero(lam0 >= threshold))
    e1 = int(np.count_nonzero(lam1 < threshold))
    pe = pi0 * e0 / n + pi1 * e1 / n
    lo, hi = wilson_interval(pe, 2 * n)
    return MonteCarloResult(2 * n, e0, e1, pe, min(lo, pe), max(hi, pe), seed, float(threshold), pi0)


def monte_carlo_pe(
    statistic: Statistic,
    threshold: float,
    model: ReadoutModel,
    trials: int,
    seed: int,
    stream: int = EVAL_STREAM,
    batch_size: int = 500,
) -> MonteCarloResult:
    """Estimate the average error probability of ``statistic >= threshold``.

    ``trials`` counts records over both hypotheses (half each).
    """
    if trials < 1000:
        raise InvalidArgument("at least 1000 trials are required")
    sims = simulate_statistics(model, {"rule": statistic}, trials // 2, seed, stream, batch_size)
    lam0, lam1 = sims["rule"]
    return pe_from_statistics(lam0, lam1, threshold, model.pi0, model.pi1, seed)


def default_threshold_grid(scale: float, points: int = 60, lo: float = 1e-3, hi: float = 10.0) -> np.ndarray:
    """Symmetric log-spaced grid ``scale * {-hi..-lo, 0, lo..hi}``."""
    pos = np.logspace(math.log10(lo), math.log10(hi), points)
    return scale * np.concatenate([-pos[::-1], [0.0], pos])


def best_threshold(lam0, lam1, grid, pi0: float, pi1: float) -> float:
    """Grid point with the smallest empirical error; ties go to the point nearest 0."""
    grid = np.asarray(grid, dtype=float)
    s0, s1 = np.sort(lam0), np.sort(lam1)
    fa = (len(s0) - np.searchsorted(s0, grid, side="left")) / len(s0)
    miss = np.searchsorted(s1, grid, side="left") / len(s1)
    pe = pi0 * fa + pi1 * miss
    best = np.flatnonzero(pe == pe.min())
    return float(grid[best[np.argmin(np.abs(grid[best]))]])


def tune_threshold(
    statistic: Statistic,
    model: ReadoutModel,
    trials: int,
    threshold_grid,
    seed: int,
    batch_size: int = 500,
) -> Tuple[float, MonteCarloResult]:
    """Pick the threshold on a held-out batch, then estimate its error.

    The tuning batch uses a separate random stream from the evaluation
    batch, so the reported error is not biased by the selection.
    """
    grid = np.atleast_1d(np.asarray(threshold_grid, dtype=float))
    if grid.size == 0:
        raise InvalidArgument("threshold grid is empty")
    if grid.size == 1:
        thr = float(grid[0])
    else:
        tune = simulate_statistics(model, {"rule": statistic}, trials // 2, seed, TUNE_STREAM, batch_size)
        thr = best_threshold(*tune["rule"], grid, model.pi0, model.pi1)
    return thr, monte_carlo_pe(statistic, thr, model, trials, seed, EVAL_STREAM, batch_size)


@dataclass(frozen=True)
class ReadoutEvaluation:
    """Everything reported for one readout operating point."""

    model: ReadoutModel
    h: np.ndarray
    Q: float
    R_tilde: float
    ropt: MonteCarloResult
    lrt: MonteCarloResult
    tuned: Optional[MonteCarloResult] = None


def evaluate_readout(
    model: ReadoutModel,
    trials: int,
    seed: int,
    tune: bool = False,
    threshold_grid=None,
    batch_size: int = 500,
) -> ReadoutEvaluation:
    """R-optimal rule and LRT on common simulated records, plus bounds.

    With ``tune=True`` the R-optimal threshold is also chosen on a held-out
    batch (``threshold_grid`` defaults to :func:`default_threshold_grid`
    scaled by ``sqrt(H^T M H)``) and re-evaluated on the main batch.
    """
    if trials < 1000:
        raise InvalidArgument("at least 1000 trials are required")
    h = solve_fredholm_filter(model)
    Q, R = readout_bounds(model, h)
    ropt = lambda y: r_optimal_statistic(h, model, y)  # noqa: E731
    lrt = lambda y: lrt_statistic(model, y)  # noqa: E731
    sims = simulate_statistics(model, {"ropt": ropt, "lrt": lrt}, trials // 2, seed, EVAL_STREAM, batch_size)
    res_r = pe_from_statistics(*sims["ropt"], 0.0, model.pi0, model.pi1, seed)
    res_l = pe_from_statistics(*sims["lrt"], lrt_threshold(model), model.pi0, model.pi1, seed)
    tuned = None
    if tune:
        if threshold_grid is None:
            # at the R-optimum M H = Delta, so H^T M H = H^T Delta = 1 / R
            threshold_grid = default_threshold_grid(math.sqrt(1.0 / R))
        tune_sims = simulate_statistics(model, {"ropt": ropt}, trials // 2, seed, TUNE_STREAM, batch_size)
        thr = best_threshold(*tune_sims["ropt"], threshold_grid, model.pi0, model.pi1)
        tuned = pe_from_statistics(*sims["ropt"], thr, model.pi0, model.pi1, seed)
    return ReadoutEvaluation(model, h, Q, R, res_r, res_l, tuned)
