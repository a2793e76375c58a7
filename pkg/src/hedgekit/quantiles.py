"""Per-prompt mapping of raw proxy scores to empirical quantiles.

The default ``midpoint`` rule sends the score of (average) rank ``r`` among
``K`` scores to ``(r - 0.5) / K``, so quantiles never touch 0 or 1.  This
matters for the BoN score function, which contains ``log u``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .exceptions import ConfigurationError, DataError

RULES = ("midpoint", "right_cdf")
MIN_DENSE_POOL = 16


class SparsePoolWarning(UserWarning):
    """A pool is too small for the discrete quantiles to look uniform."""


def _validate_scores(scores) -> np.ndarray:
    arr = np.asarray(scores, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise DataError("scores must be a non-empty one-dimensional sequence")
    bad = np.flatnonzero(~np.isfinite(arr))
    if bad.size:
        raise DataError(f"non-finite score {arr[bad[0]]!r} at index {int(bad[0])}")
    return arr


def _positions(ranks: np.ndarray, k: int, rule: str) -> np.ndarray:
    if rule == "midpoint":
        return (ranks - 0.5) / k
    if rule == "right_cdf":
        return ranks / (k + 1)
    raise ConfigurationError(f"unknown quantile rule {rule!r}; choose from {RULES}")


def to_quantiles(scores, rule: str = "midpoint", *, warn_small: bool = True) -> np.ndarray:
    """Empirical quantiles of ``scores`` with average ranks for ties.

    Examples:
        >>> to_quantiles([3.2, -1.0, 7.7], warn_small=False).round(7).tolist()
        [0.5, 0.1666667, 0.8333333]
        >>> to_quantiles([1, 1, 2], warn_small=False).round(7).tolist()
        [0.3333333, 0.3333333, 0.8333333]
    """
    arr = _validate_scores(scores)
    if warn_small and arr.size < MIN_DENSE_POOL:
        warnings.warn(
            f"pool of {arr.size} scores is below {MIN_DENSE_POOL}; quantiles are coarse",
            SparsePoolWarning,
            stacklevel=2,
        )
    return _positions(rankdata(arr, method="average"), arr.size, rule)


@dataclass(frozen=True)
class QuantileMap:
    """Empirical CDF of a reference set of scores, applicable to new scores.

    On the reference scores themselves :meth:`transform` reproduces
    :func:`to_quantiles`.  Scores outside the reference range are clipped to
    the extreme reference quantiles.
    """

    sorted_scores: np.ndarray = field(repr=False)
    rule: str = "midpoint"
    tie_rule: str = "average_rank"

    def __post_init__(self):
        if self.rule not in RULES:
            raise ConfigurationError(f"unknown quantile rule {self.rule!r}")
        if self.tie_rule != "average_rank":
            raise ConfigurationError(f"unknown tie rule {self.tie_rule!r}")
        s = np.asarray(self.sorted_scores, dtype=float)
        if s.ndim != 1 or s.size == 0 or np.any(np.diff(s) < 0):
            raise DataError("sorted_scores must be a non-empty non-decreasing sequence")
        object.__setattr__(self, "sorted_scores", s)

    @classmethod
    def from_scores(cls, scores, rule: str = "midpoint") -> QuantileMap:
        return cls(np.sort(_validate_scores(scores)), rule=rule)

    def transform(self, scores) -> np.ndarray:
        x = _validate_scores(scores)
        s = self.sorted_scores
        k = s.size
        below = np.searchsorted(s, x, side="left")
        upto = np.searchsorted(s, x, side="right")
        # average rank of x among the reference; unseen values sit between ranks
        ranks = np.where(upto > below, 0.5 * (below + 1 + upto), below + 0.5)
        ranks = np.clip(ranks, 1.0, float(k))
        return _positions(ranks, k, self.rule)
