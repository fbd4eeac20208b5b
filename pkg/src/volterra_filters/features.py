"""Polynomial feature sets y^(P): every monomial of the record up to degree P.

A monomial y(k1) y(k2) ... y(kp) is identified by its sorted multi-index
``(k1, ..., kp)`` with ``1 <= k1 <= ... <= kp <= K`` (1-based, to match the
usual notation). The empty tuple is the constant feature 1.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import comb
from typing import Tuple

import numpy as np

from .errors import InvalidArgument

FeatureIndex = Tuple[int, ...]


def feature_count(K: int, P: int) -> int:
    """Number of monomials of degree <= P in K variables."""
    return sum(comb(K + p - 1, p) for p in range(P + 1))


@dataclass(frozen=True)
class FeatureSet:
    """Ordered, immutable list of feature indices for a record of length K.

    The order is degree-lexicographic: the constant first, then all degree-1
    indices, then degree 2 in lexicographic order, and so on.
    """

    K: int
    P: int
    indices: Tuple[FeatureIndex, ...]
    _position: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_position", {mu: i for i, mu in enumerate(self.indices)})

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def __getitem__(self, i: int) -> FeatureIndex:
        return self.indices[i]

    @property
    def size(self) -> int:
        return len(self.indices)

    def position(self, index: FeatureIndex) -> int:
        """Column of ``index`` in this set; raises ``KeyError`` if absent."""
        return self._position[tuple(index)]

    def degrees(self) -> np.ndarray:
        return np.array([len(mu) for mu in self.indices], dtype=int)

    def labels(self) -> list[str]:
        """Human-readable monomials: ``1``, ``y1``, ``y1*y2`` ..."""
        return [format_index(mu) for mu in self.indices]


def format_index(index: FeatureIndex) -> str:
    if not index:
        return "1"
    return "*".join(f"y{k}" for k in index)


def parse_index(text: str) -> FeatureIndex:
    text = text.strip()
    if text == "1":
        return ()
    try:
        ks = tuple(int(part.strip()[1:]) for part in text.split("*"))
    except ValueError as exc:
        raise InvalidArgument(f"bad feature label {text!r}") from exc
    if any(not part.strip().startswith("y") for part in text.split("*")):
        raise InvalidArgument(f"bad feature label {text!r}")
    if list(ks) != sorted(ks):
        raise InvalidArgument(f"feature label {text!r} is not sorted")
    return ks


def enumerate_features(K: int, P: int) -> FeatureSet:
    """All multi-indices of degree <= P over {1..K}, degree-lexicographic.

    >>> enumerate_features(2, 2).indices
    ((), (1,), (2,), (1, 1), (1, 2), (2, 2))
    """
    if int(K) != K or K < 1:
        raise InvalidArgument(f"record length K must be a positive integer, got {K}")
    if int(P) != P or P < 0:
        raise InvalidArgument(f"order P must be a nonnegative integer, got {P}")
    K, P = int(K), int(P)
    indices = []
    for p in range(P + 1):
        indices.extend(itertools.combinations_with_replacement(range(1, K + 1), p))
    return FeatureSet(K, P, tuple(indices))


def evaluate_features(record, feature_set: FeatureSet) -> np.ndarray:
    """Evaluate every monomial of ``feature_set`` on one record or a batch.

    Parameters
    ----------
    record : array_like, shape (K,) or (n, K)
    feature_set : FeatureSet

    Returns
    -------
    ndarray, shape (M,) or (n, M)
    """
    y = np.asarray(record, dtype=float)
    single = y.ndim == 1
    if single:
        y = y[None, :]
    if y.ndim != 2 or y.shape[1] != feature_set.K:
        raise InvalidArgument(
            f"record length {y.shape[-1]} does not match feature set K={feature_set.K}"
        )
    if feature_set.P == 1:
        out = np.hstack([np.ones((y.shape[0], 1)), y])
        return out[0] if single else out
    out = np.empty((y.shape[0], feature_set.size))
    # each degree-p column is a degree-(p-1) column times one more factor
    for i, mu in enumerate(feature_set.indices):
        if not mu:
            out[:, i] = 1.0
        else:
            out[:, i] = out[:, feature_set.position(mu[:-1])] * y[:, mu[-1] - 1]
    return out[0] if single else out
