"""Binary hypothesis testing with polynomial test statistics.

A rule computes ``lambda(y) = h0 + H^T Y`` over the non-constant features
Y and decides H1 when ``lambda >= threshold``. With ``h0 = -H^T Ybar`` the
conditional means of lambda are ``-+H^T Delta`` and the Cantelli inequality
bounds the average error probability by Q(H) <= R(H).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np

from ._linalg import spd_factor
from .errors import IndistinguishableHypotheses, InvalidArgument, InvalidRule
from .features import FeatureSet, evaluate_features
from .moments import MomentSet

H0, H1 = 0, 1


def _check_priors(pi0, pi1):
    if not (0.0 <= pi0 <= 1.0 and 0.0 <= pi1 <= 1.0) or abs(pi0 + pi1 - 1.0) > 1e-12:
        raise InvalidArgument(f"priors must lie in [0, 1] and sum to 1, got {pi0}, {pi1}")


@dataclass(frozen=True)
class HypothesisMoments:
    """Conditional first and second moments of the features under H0 and H1.

    Means and covariances exclude the constant feature.
    """

    feature_set: FeatureSet
    mean_Y0: np.ndarray
    mean_Y1: np.ndarray
    C0: np.ndarray
    C1: np.ndarray
    pi0: float = 0.5
    pi1: float = 0.5

    def __post_init__(self):
        _check_priors(self.pi0, self.pi1)
        n = self.feature_set.size - 1
        for name in ("mean_Y0", "mean_Y1"):
            if np.shape(getattr(self, name)) != (n,):
                raise InvalidArgument(f"{name} must have length {n}")
        for name in ("C0", "C1"):
            if np.shape(getattr(self, name)) != (n, n):
                raise InvalidArgument(f"{name} must be {n}x{n}")

    @property
    def delta(self) -> np.ndarray:
        """Half the mean separation, ``(<Y>_1 - <Y>_0) / 2``."""
        return 0.5 * (self.mean_Y1 - self.mean_Y0)

    @property
    def ybar(self) -> np.ndarray:
        """Midpoint of the conditional means."""
        return 0.5 * (self.mean_Y0 + self.mean_Y1)

    @property
    def mixture(self) -> np.ndarray:
        """Prior-weighted covariance ``pi0 C0 + pi1 C1``."""
        return self.pi0 * self.C0 + self.pi1 * self.C1


def hypothesis_stats(m0: MomentSet, m1: MomentSet, pi0: float = 0.5, pi1: float = 0.5) -> HypothesisMoments:
    """Centre the raw moments of each hypothesis into detection statistics."""
    if m0.feature_set.indices != m1.feature_set.indices:
        raise InvalidArgument("hypothesis moment sets use different feature sets")
    _check_priors(pi0, pi1)
    stats = []
    for m in (m0, m1):
        mean = m.mean_Y[1:]
        C = m.C_Y[1:, 1:] - np.outer(mean, mean)
        stats.append((mean, 0.5 * (C + C.T)))
    (mu0, C0), (mu1, C1) = stats
    if np.array_equal(mu0, mu1):
        raise IndistinguishableHypotheses("feature means coincide under both hypotheses")
    return HypothesisMoments(m0.feature_set, mu0, mu1, C0, C1, pi0, pi1)


@dataclass(frozen=True)
class DetectionRule:
    """Test statistic ``h0 + H^T Y`` compared against ``threshold``.

    ``delta`` and ``ybar`` record the statistics the rule was built from.
    The threshold is kept apart from ``h0`` so that tuning it leaves the
    synthesised filter untouched.
    """

    feature_set: FeatureSet
    H: np.ndarray
    h0: float
    threshold: float = 0.0
    delta: Optional[np.ndarray] = None
    ybar: Optional[np.ndarray] = None

    def __post_init__(self):
        H = np.asarray(self.H, dtype=float).ravel()
        if H.shape != (self.feature_set.size - 1,):
            raise InvalidArgument(f"H must have length {self.feature_set.size - 1}")
        if not (np.all(np.isfinite(H)) and np.isfinite(self.h0) and np.isfinite(self.threshold)):
            raise InvalidArgument("rule coefficients must be finite")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "h0", float(self.h0))
        object.__setattr__(self, "threshold", float(self.threshold))

    def statistic(self, record) -> np.ndarray:
        Y = evaluate_features(record, self.feature_set)
        return self.h0 + Y[..., 1:] @ self.H

    def with_threshold(self, threshold: float) -> "DetectionRule":
        return replace(self, threshold=float(threshold))

    def scaled(self, c: float) -> "DetectionRule":
        """Same decisions for ``c > 0``: H, h0 and threshold all scaled."""
        if c <= 0:
            raise InvalidArgument("scale must be positive")
        return replace(self, H=c * self.H, h0=c * self.h0, threshold=c * self.threshold)

    def to_csv(self, path=None, R_tilde: float = float("nan"), Q: float = float("nan")) -> str:
        buf = io.StringIO()
        buf.write(
            f"# h0={self.h0!r},threshold={self.threshold!r},R_tilde={float(R_tilde)!r},Q={float(Q)!r}\n"
        )
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["feature", "coefficient"])
        for label, c in zip(self.feature_set.labels()[1:], self.H):
            w.writerow([label, repr(float(c))])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def r_optimal_rule(hm: HypothesisMoments) -> Tuple[DetectionRule, float]:
    """Minimise R(H) over H: ``H = (pi0 C0 + pi1 C1)^-1 Delta``.

    Returns the rule (threshold 0) and ``R_tilde = 1 / (Delta^T H)``.
    """
    delta = hm.delta
    if not np.any(delta):
        raise IndistinguishableHypotheses("Delta is zero; no linear statistic separates the hypotheses")
    H = spd_factor(hm.mixture, "mixture covariance").solve(delta)
    d = float(H @ delta)
    if d < 0:
        # only reachable through regularisation; orientation is conventional
        H, d = -H, -d
    if d == 0:
        raise IndistinguishableHypotheses("synthesised statistic has equal conditional means")
    rule = DetectionRule(hm.feature_set, H, -float(H @ hm.ybar), 0.0, delta, hm.ybar)
    return rule, 1.0 / d


def _tail(v: float, d: float) -> float:
    # 1 / (1 + d^2 / v) written to survive v == 0
    return v / (v + d * d) if v > 0 else 0.0


def error_bounds(rule: DetectionRule, hm: HypothesisMoments) -> Tuple[float, float]:
    """Upper bounds ``(Q, R)`` on the average error probability of ``rule``."""
    H = rule.H
    d = float(H @ hm.delta)
    if not d > 0:
        raise InvalidRule(f"H^T Delta must be positive, got {d}")
    v0 = float(H @ hm.C0 @ H)
    v1 = float(H @ hm.C1 @ H)
    Q = hm.pi0 * _tail(v0, d) + hm.pi1 * _tail(v1, d)
    R = (hm.pi0 * v0 + hm.pi1 * v1) / d**2
    return Q, R


def cantelli_bound(mean: float, variance: float) -> float:
    """Bound ``Pr(lambda >= 0) <= var / (var + mean^2)`` for negative mean."""
    if variance < 0:
        raise InvalidArgument("variance must be nonnegative")
    if mean >= 0:
        raise InvalidArgument("the one-sided bound needs a negative mean")
    return _tail(float(variance), float(mean))


def decide(rule: DetectionRule, record):
    """Return 1 (H1) where ``lambda >= threshold``, else 0 (H0)."""
    lam = rule.statistic(record)
    out = (lam >= rule.threshold).astype(int)
    return int(out) if np.ndim(out) == 0 else out
