"""Best-of-n and Best-of-Poisson over a finite alphabet.

Items ``1..m`` are ordered by proxy reward with base PMF ``p_i`` and CDF
``F_i``.  BoN selects item ``i`` with probability ``F_i**n - F_{i-1}**n`` and
BoP with ``g(F_i) - g(F_{i-1})``, ``g(z) = z exp(mu (z - 1))``.  Both are
evaluated in a cancellation-free form so that tiny cells keep full relative
precision, which the TP2 and score checks rely on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import poisson

from .exceptions import ConfigurationError, DataError, DomainError
from .policies import PolicyKind

TP2_TOL = 1e-12
POISSON_TAIL = 1e-12
KINDS = (PolicyKind.BON, PolicyKind.BOP)


@dataclass(frozen=True)
class DiscreteBase:
    """Base distribution over ``m`` proxy-ordered items.

    ``cdf`` is derived from ``pmf`` and ends at exactly 1.
    """

    pmf: np.ndarray
    truths: np.ndarray
    cdf: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        p = np.asarray(self.pmf, dtype=float)
        t = np.asarray(self.truths, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise DataError("pmf must be a non-empty one-dimensional sequence")
        if t.shape != p.shape:
            raise DataError("pmf and truths must have equal length")
        if not np.all(np.isfinite(p)) or np.any(p <= 0):
            raise DataError("pmf entries must be finite and positive")
        if abs(p.sum() - 1.0) > 1e-9:
            raise DataError(f"pmf sums to {p.sum()!r}, not 1")
        if not np.all(np.isfinite(t)):
            raise DataError("truths must be finite")
        F = np.cumsum(p)
        F[-1] = 1.0
        if np.any(np.diff(F) <= 0):
            raise DataError("cdf is not strictly increasing")
        object.__setattr__(self, "pmf", p)
        object.__setattr__(self, "truths", t)
        object.__setattr__(self, "cdf", F)

    @classmethod
    def uniform(cls, m: int, truths: Sequence[float] | None = None) -> DiscreteBase:
        """Uniform base; default truths are the right endpoints ``i / m``."""
        if m < 1:
            raise DataError("m must be at least 1")
        t = np.arange(1, m + 1) / m if truths is None else truths
        return cls(np.full(m, 1.0 / m), t)

    @property
    def m(self) -> int:
        return self.pmf.size


@dataclass(frozen=True)
class CheckResult:
    """Verdict of a structural check and its worst observed margin."""

    passed: bool
    worst: float

    def __bool__(self) -> bool:
        return self.passed


def _kind(kind) -> PolicyKind:
    k = PolicyKind(kind)
    if k not in KINDS:
        raise ConfigurationError(f"discrete policies are bon or bop, got {k.value}")
    return k


def _check_theta(kind: PolicyKind, theta: float) -> float:
    theta = float(theta)
    if not math.isfinite(theta):
        raise DomainError(f"theta must be finite, got {theta!r}")
    if kind is PolicyKind.BON and theta < 1:
        raise DomainError(f"BoN needs n >= 1, got {theta}")
    if kind is PolicyKind.BOP and theta < 0:
        raise DomainError(f"BoP needs mu >= 0, got {theta}")
    return theta


def _log_pmf(base: DiscreteBase, kind: PolicyKind, theta: float) -> np.ndarray:
    F, p = base.cdf, base.pmf
    F_prev = F - p
    F_prev[0] = 0.0
    if kind is PolicyKind.BON:
        # F_i^n (1 - (1 - p_i/F_i)^n)
        with np.errstate(divide="ignore"):
            inner = -np.expm1(theta * np.log1p(-p / F))
        return theta * np.log(F) + np.log(inner)
    # e^{mu(F_i - 1)} (p_i - F_{i-1} expm1(-mu p_i)); both terms are >= 0
    return theta * (F - 1) + np.log(p - F_prev * np.expm1(-theta * p))


def discrete_policy_pmf(base: DiscreteBase, kind, theta: float) -> np.ndarray:
    """Selection PMF of discrete BoN (real ``n``) or BoP.

    Examples:
        >>> b = DiscreteBase([0.5, 0.5], [0.0, 1.0])
        >>> discrete_policy_pmf(b, "bon", 2).tolist()
        [0.25, 0.75]
    """
    k = _kind(kind)
    theta = _check_theta(k, theta)
    if (k is PolicyKind.BON and theta == 1) or (k is PolicyKind.BOP and theta == 0):
        return base.pmf.copy()
    return np.exp(_log_pmf(base, k, theta))


def check_tp2(base: DiscreteBase, kind, theta1: float, theta2: float) -> CheckResult:
    """Total positivity of order 2 of ``(theta, i) -> pi_theta(i)``.

    Every minor ``pi1(i1) pi2(i2) - pi1(i2) pi2(i1)`` with ``i1 < i2`` must
    exceed ``-1e-12``.  ``worst`` is the smallest minor (``inf`` when
    ``m = 1``).
    """
    if not theta2 > theta1:
        raise DomainError("theta2 must exceed theta1")
    a = discrete_policy_pmf(base, kind, theta1)
    b = discrete_policy_pmf(base, kind, theta2)
    if a.size < 2:
        return CheckResult(True, math.inf)
    M = np.outer(a, b)
    minors = (M - M.T)[np.triu_indices(a.size, k=1)]
    worst = float(minors.min())
    return CheckResult(worst > -TP2_TOL, worst)


def discrete_reward_curve(base: DiscreteBase, kind, theta_grid: Sequence[float]) -> list[tuple[float, float]]:
    """Exact expected true reward ``sum_i pi_theta(i) r_t(i)`` on a grid."""
    grid = np.asarray(theta_grid, dtype=float)
    if grid.ndim != 1 or np.any(np.diff(grid) < 0):
        raise ConfigurationError("theta_grid must be sorted ascending")
    return [(float(t), float(discrete_policy_pmf(base, kind, t) @ base.truths)) for t in grid]


def count_extrema(values: Sequence[float], atol: float = 0.0) -> tuple[int, int]:
    """Strict interior local maxima and minima of a sampled curve.

    Increments with magnitude ``<= atol`` count as flat; a run of flats
    between a rise and a fall still makes one extremum.
    """
    d = np.diff(np.asarray(values, dtype=float))
    s = np.sign(d) * (np.abs(d) > atol)
    s = s[s != 0]
    turns = s[1:] - s[:-1]
    return int(np.sum(turns < 0)), int(np.sum(turns > 0))


def _poisson_log_mean(mu: float) -> float:
    if mu == 0:
        return 0.0
    k_max = int(poisson.isf(POISSON_TAIL, mu)) + 1
    k = np.arange(k_max + 1)
    return float(poisson.pmf(k, mu) @ np.log1p(k))


def discrete_bop_kl(base: DiscreteBase, mu: float) -> tuple[float, float]:
    """Exact KL of discrete BoP to the base and its upper bound.

    The bound is ``E[log N] - 1 + E[1/N]`` with ``N = 1 + Poisson(mu)``; the
    first expectation is summed until the Poisson tail drops below 1e-12 and
    ``E[1/N] = (1 - e^{-mu}) / mu``.
    """
    mu = _check_theta(PolicyKind.BOP, mu)
    if mu == 0:
        return 0.0, 0.0
    logq = _log_pmf(base, PolicyKind.BOP, mu)
    q = np.exp(logq)
    exact = max(float(q @ (logq - np.log(base.pmf))), 0.0)
    inv_mean = -math.expm1(-mu) / mu
    bound = _poisson_log_mean(mu) - 1.0 + inv_mean
    return exact, bound


def check_score_monotone(base: DiscreteBase, kind, theta: float, h: float | None = None) -> CheckResult:
    """Strict increase in ``i`` of the score ``d/dtheta log pi_theta(i)``.

    The score is a central difference with step ``h`` (default
    ``1e-5 * max(1, theta)``).  ``worst`` is the smallest consecutive
    increment (``inf`` when ``m = 1``).
    """
    k = _kind(kind)
    theta = _check_theta(k, theta)
    if h is None:
        h = 1e-5 * max(1.0, theta)
    if not h > 0:
        raise ConfigurationError("h must be positive")
    _check_theta(k, theta - h)
    psi = (_log_pmf(base, k, theta + h) - _log_pmf(base, k, theta - h)) / (2 * h)
    if psi.size < 2:
        return CheckResult(True, math.inf)
    worst = float(np.diff(psi).min())
    return CheckResult(worst > 0, worst)
