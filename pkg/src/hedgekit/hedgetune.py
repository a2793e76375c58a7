"""Calibration of the hacking threshold from proxy/true score pairs.

For a one-parameter family ``p_theta`` on proxy quantiles the derivative of
the expected true reward ``f(theta) = E_theta[r_t(u)]`` is the residual

    R(theta) = E_theta[r_t(u) * psi(u, theta)],   psi = d/dtheta log p_theta.

The hacking threshold is the root of ``R``.  Residuals are estimated either
from per-prompt empirical quantile atoms (self-normalized weights
``w_k = p_theta(u_k) / sum_j p_theta(u_j)``, with ``psi`` centered under
``w`` so the residual is the exact derivative of ``sum_k w_k r_k``) or, when the true reward is known as a
function, by composite Gauss-Legendre quadrature on ``[0, 1]``.  SBoN has no
closed-form density; its residual is the Monte Carlo average of the
conditional covariance of ``(r_t(U), U)`` under the softmax weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from ._utils import ordered_map, stream
from .exceptions import ConfigurationError, DataError, DomainError
from .policies import PolicyKind
from .samplers import CandidatePool
from .softmax import Estimate, McConfig

MAX_ITER = 200
DEFAULT_BRACKETS = {PolicyKind.BON: (1.0, 100.0), PolicyKind.BOP: (0.1, 200.0), PolicyKind.SBON: (0.0, 100.0)}
METHODS = (PolicyKind.BON, PolicyKind.SBON, PolicyKind.BOP)


class Regime(str, Enum):
    MONOTONIC_IMPROVEMENT = "monotonic_improvement"
    REWARD_HACKING = "reward_hacking"
    REWARD_GROKKING = "reward_grokking"
    IMMEDIATE_DECLINE = "immediate_decline"

    def __str__(self) -> str:
        return self.value

    @classmethod
    def from_signs(cls, first: int, last: int) -> Regime:
        """Shape of ``f`` from the signs of its slope at both ends of the range."""
        if first > 0 and last < 0:
            return cls.REWARD_HACKING
        if first < 0 and last > 0:
            return cls.REWARD_GROKKING
        if first >= 0 and last >= 0:
            return cls.MONOTONIC_IMPROVEMENT
        return cls.IMMEDIATE_DECLINE


def _composite_nodes(order: int = 20) -> tuple[np.ndarray, np.ndarray]:
    # panels refined geometrically toward 0, where the BoN score has log u
    edges = np.concatenate([[0.0], np.geomspace(1e-14, 1e-2, 13), np.linspace(1e-2, 1.0, 100)[1:]])
    x, w = np.polynomial.legendre.leggauss(order)
    a, b = edges[:-1, None], edges[1:, None]
    nodes = (0.5 * (b - a) * (x + 1) + a).ravel()
    weights = (0.5 * (b - a) * w).ravel()
    return nodes, weights


_NODES, _WEIGHTS = _composite_nodes()


@dataclass(frozen=True)
class HedgeData:
    """Calibration data: per-pool quantiles with aligned true rewards.

    When ``truth_fn`` is set the data is in exact-quadrature mode: BoN/BoP
    quantities integrate ``truth_fn`` on ``[0, 1]`` and SBoN draws continuous
    uniforms.  ``pools`` then holds a single pool of midpoint atoms for
    display purposes.
    """

    pools: tuple[CandidatePool, ...]
    true_by_quantile: tuple[np.ndarray, ...] = field(repr=False)
    truth_fn: Callable[[np.ndarray], np.ndarray] | None = field(default=None, repr=False)

    def __post_init__(self):
        if not self.pools:
            raise DataError("HedgeData needs at least one pool")
        if len(self.pools) != len(self.true_by_quantile):
            raise DataError("one truth vector per pool is required")
        for pool, r in zip(self.pools, self.true_by_quantile):
            if pool.quantiles is None:
                raise DataError(f"pool {pool.prompt_id!r} has no quantiles")
            if np.shape(r) != (len(pool),):
                raise DataError(f"truths of pool {pool.prompt_id!r} are misaligned")
            if not np.all(np.isfinite(r)):
                raise DataError(f"non-finite true score in pool {pool.prompt_id!r}")

    @classmethod
    def from_pools(cls, pools: Sequence[CandidatePool]) -> HedgeData:
        ready = []
        for p in pools:
            if not p.has_truth:
                raise DataError(f"pool {p.prompt_id!r} lacks true scores needed for calibration")
            ready.append(p if p.quantiles is not None else p.with_quantiles())
        return cls(tuple(ready), tuple(p.truths for p in ready))

    @classmethod
    def exact(cls, truth_fn: Callable[[np.ndarray], np.ndarray], atoms: int = 4096) -> HedgeData:
        u = (np.arange(atoms) + 0.5) / atoms
        r = np.asarray(truth_fn(u), dtype=float)
        pool = CandidatePool.from_arrays("exact", u, r, with_quantiles=False)
        pool = CandidatePool(pool.prompt_id, pool.candidates, u)
        return cls((pool,), (r,), truth_fn)

    @property
    def is_exact(self) -> bool:
        return self.truth_fn is not None

    def scaled(self, c: float) -> HedgeData:
        """Same data with every true reward multiplied by ``c``."""
        fn = None if self.truth_fn is None else (lambda u, f=self.truth_fn: c * np.asarray(f(u)))
        return HedgeData(self.pools, tuple(c * r for r in self.true_by_quantile), fn)


@dataclass
class CalibrationResult:
    """Outcome of :func:`find_threshold`.

    ``residual_trace`` lists ``(theta, residual, se)`` for every evaluation.
    ``converged`` is true only when a sign change was bracketed and bisection
    shrank the bracket below the tolerance; in that case ``theta_dagger`` is
    the located root.  Otherwise ``theta_dagger`` is the better bracket end.
    """

    method: PolicyKind
    theta_dagger: float
    regime: Regime
    bracket: tuple[float, float]
    converged: bool
    residual_trace: list[tuple[float, float, float]] = field(default_factory=list)
    mc_samples: int = 0
    seed: int | None = None
    iterations: int = 0
    diagnostics: dict = field(default_factory=dict)


def _method(method) -> PolicyKind:
    kind = PolicyKind(method)
    if kind not in METHODS:
        raise ConfigurationError(f"calibration supports bon, sbon and bop, not {kind.value}")
    return kind


def _check_theta(kind: PolicyKind, theta: float) -> float:
    theta = float(theta)
    lo = 1.0 if kind is PolicyKind.BON else 0.0
    if not math.isfinite(theta) or theta < lo:
        raise DomainError(f"{kind.value} parameter must be finite and >= {lo}, got {theta!r}")
    return theta


def _density_and_score(kind: PolicyKind, theta: float, u: np.ndarray):
    if kind is PolicyKind.BON:
        with np.errstate(divide="ignore"):
            logu = np.log(u)
        return theta * np.exp((theta - 1) * logu), 1.0 / theta + logu
    p = (theta * u + 1) * np.exp(theta * (u - 1))
    return p, u - 1 + u / (theta * u + 1)


def _sbon_n(n) -> int:
    if n is None:
        raise ConfigurationError("sbon calibration needs the pool size n")
    if int(n) != n or n < 1:
        raise ConfigurationError(f"n must be a positive integer, got {n!r}")
    return int(n)


def _sbon_draws(data: HedgeData, t: int, n: int, cfg: McConfig):
    # common random numbers across lambda: the stream ignores theta
    rng = stream(cfg.seed, t)
    if data.is_exact:
        U = rng.random((cfg.samples, n))
        return U, np.asarray(data.truth_fn(U), dtype=float)
    q = data.pools[t].quantiles
    idx = rng.integers(0, q.size, size=(cfg.samples, n))
    return q[idx], data.true_by_quantile[t][idx]


def _softmax_rows(U: np.ndarray, lam: float) -> np.ndarray:
    z = lam * U
    w = np.exp(z - z.max(axis=1, keepdims=True))
    return w / w.sum(axis=1, keepdims=True)


def _sbon_per_pool(data, lam, n, cfg, stat):
    def work(t):
        U, R = _sbon_draws(data, t, n, cfg)
        P = _softmax_rows(U, lam)
        return stat(U, R, P)

    return ordered_map(work, len(data.pools))


def _combine(per_pool: list[np.ndarray]) -> Estimate:
    if len(per_pool) == 1:
        return Estimate.from_replicates(per_pool[0])
    return Estimate.from_replicates(np.array([v.mean() for v in per_pool]))


def _cov_stat(U, R, P):
    return (R * U * P).sum(axis=1) - (R * P).sum(axis=1) * (U * P).sum(axis=1)


def _mean_stat(U, R, P):
    return (R * P).sum(axis=1)


def _cfg(cfg: McConfig | None) -> McConfig:
    return cfg if cfg is not None else McConfig(samples=4000, seed=0)


def residual(method, theta: float, data: HedgeData, cfg: McConfig | None = None, *, n: int | None = None) -> Estimate:
    """Estimate ``R(theta) = d f / d theta`` averaged over pools.

    Args:
        method: ``"bon"`` (theta is the real exponent ``a >= 1``), ``"bop"``
            (theta is ``mu``) or ``"sbon"`` (theta is ``lambda``, ``n`` fixed).
        theta: parameter value.
        data: calibration data.
        cfg: Monte Carlo controls, used by SBoN only.
        n: SBoN pool size.

    Returns:
        Mean and standard error across pools.  Exact-quadrature BoN/BoP
        residuals carry zero standard error.
    """
    kind = _method(method)
    theta = _check_theta(kind, theta)
    if kind is PolicyKind.SBON:
        per_pool = _sbon_per_pool(data, theta, _sbon_n(n), _cfg(cfg), _cov_stat)
        return _combine(per_pool)
    if data.is_exact:
        p, psi = _density_and_score(kind, theta, _NODES)
        r = data.truth_fn(_NODES)
        return Estimate(float(np.sum(_WEIGHTS * r * psi * p)), 0.0)
    vals = []
    for pool, r in zip(data.pools, data.true_by_quantile):
        p, psi = _density_and_score(kind, theta, pool.quantiles)
        w = p / np.sum(p)
        # centering makes this the exact derivative of the self-normalized f
        vals.append(np.sum(w * r * (psi - np.sum(w * psi))))
    return Estimate.from_replicates(np.array(vals)) if len(vals) > 1 else Estimate(vals[0], 0.0)


def _truth_per_pool(kind, theta, data, cfg, n) -> np.ndarray:
    if kind is PolicyKind.SBON:
        per_pool = _sbon_per_pool(data, theta, _sbon_n(n), _cfg(cfg), _mean_stat)
        return np.array([v.mean() for v in per_pool])
    if data.is_exact:
        p, _ = _density_and_score(kind, theta, _NODES)
        return np.array([np.sum(_WEIGHTS * data.truth_fn(_NODES) * p)])
    out = []
    for pool, r in zip(data.pools, data.true_by_quantile):
        p, _ = _density_and_score(kind, theta, pool.quantiles)
        out.append(np.sum(r * p) / np.sum(p))
    return np.array(out)


def expected_truth(method, theta: float, data: HedgeData, cfg: McConfig | None = None, *, n: int | None = None) -> Estimate:
    """Estimate ``f(theta) = E_theta[r_t(u)]`` averaged over pools."""
    kind = _method(method)
    theta = _check_theta(kind, theta)
    return Estimate.from_replicates(_truth_per_pool(kind, theta, data, cfg, n))


def truth_curve(method, thetas: Sequence[float], data: HedgeData, cfg: McConfig | None = None, *, n: int | None = None) -> np.ndarray:
    """``f`` on a grid; array of shape ``(len(thetas), pools)``."""
    kind = _method(method)
    return np.array([_truth_per_pool(kind, _check_theta(kind, t), data, cfg, n) for t in thetas])


def _sign(est: Estimate, k: float = 1.0) -> int:
    if est.mean > k * est.se and est.mean > 0:
        return 1
    if est.mean < -k * est.se and est.mean < 0:
        return -1
    return 0


def find_threshold(
    method,
    data: HedgeData,
    bracket: tuple[float, float] | None = None,
    tol: float = 1e-3,
    cfg: McConfig | None = None,
    *,
    n: int | None = None,
    max_iter: int = MAX_ITER,
) -> CalibrationResult:
    """Locate the hacking threshold by bisection on the residual.

    A root is searched only when the residuals at the bracket ends have
    opposite signs, each beyond one standard error.  Without a sign change the
    result reports the regime implied by the end signs and recommends the
    bracket end with the larger expected true reward.  Never raises for a
    missing root.
    """
    kind = _method(method)
    lo, hi = bracket if bracket is not None else DEFAULT_BRACKETS[kind]
    lo, hi = _check_theta(kind, lo), _check_theta(kind, hi)
    if not lo < hi:
        raise ConfigurationError(f"bracket must satisfy low < high, got ({lo}, {hi})")
    if not tol > 0:
        raise ConfigurationError("tol must be positive")
    mc = _cfg(cfg) if kind is PolicyKind.SBON else None

    trace: list[tuple[float, float, float]] = []

    def R(theta):
        est = residual(kind, theta, data, mc, n=n)
        trace.append((theta, est.mean, est.se))
        return est

    r_lo, r_hi = R(lo), R(hi)
    s_lo, s_hi = _sign(r_lo), _sign(r_hi)
    raw_lo = 1 if r_lo.mean > 0 else (-1 if r_lo.mean < 0 else 0)
    raw_hi = 1 if r_hi.mean > 0 else (-1 if r_hi.mean < 0 else 0)
    regime = Regime.from_signs(s_lo or raw_lo, s_hi or raw_hi)
    result = CalibrationResult(
        method=kind,
        theta_dagger=hi,
        regime=regime,
        bracket=(lo, hi),
        converged=False,
        residual_trace=trace,
        mc_samples=mc.samples if mc else 0,
        seed=mc.seed if mc else None,
    )
    if n is not None:
        result.diagnostics["n"] = int(n)

    def better_end():
        f_lo = expected_truth(kind, lo, data, mc, n=n).mean
        f_hi = expected_truth(kind, hi, data, mc, n=n).mean
        result.diagnostics["f_low"], result.diagnostics["f_high"] = f_lo, f_hi
        return lo if f_lo > f_hi else hi

    if s_lo * s_hi >= 0:
        result.diagnostics["outcome"] = "no_root"
        if regime is Regime.MONOTONIC_IMPROVEMENT:
            result.theta_dagger = hi
        elif regime is Regime.IMMEDIATE_DECLINE:
            result.theta_dagger = lo
        else:
            result.theta_dagger = better_end()
        return result

    a, b, s_a = lo, hi, s_lo
    it = 0
    degraded = False
    while b - a >= tol and it < max_iter:
        it += 1
        mid = 0.5 * (a + b)
        r_mid = R(mid)
        if not math.isfinite(r_mid.mean):
            degraded = True
            break
        if (r_mid.mean > 0) == (s_a > 0) and r_mid.mean != 0:
            a = mid
        else:
            b = mid
        if r_mid.mean == 0:
            a = b = mid
    root = 0.5 * (a + b)
    result.iterations = it
    result.diagnostics["stationary_point"] = root
    if regime is Regime.REWARD_HACKING:
        result.theta_dagger = root
        result.converged = not degraded and (b - a) < tol
        result.diagnostics["outcome"] = "root"
    else:
        # the stationary point of a grokking curve is a minimum
        result.theta_dagger = better_end()
        result.diagnostics["outcome"] = "minimum"
    return result


def _bon_order_weights(k: int, n: int) -> np.ndarray:
    c = np.arange(k + 1) / k
    return np.diff(c**n)


def _integer_curve(data: HedgeData) -> Callable[[int], float]:
    cache: dict[int, float] = {}
    if data.is_exact:
        r = data.truth_fn(_NODES)

        def f(n: int) -> float:
            if n not in cache:
                cache[n] = float(np.sum(_WEIGHTS * r * n * _NODES ** (n - 1)))
            return cache[n]

        return f
    sorted_truths = []
    for pool, r in zip(data.pools, data.true_by_quantile):
        order = np.argsort(pool.quantiles, kind="stable")
        sorted_truths.append(r[order])

    def f(n: int) -> float:
        if n not in cache:
            cache[n] = float(np.mean([np.dot(_bon_order_weights(rs.size, n), rs) for rs in sorted_truths]))
        return cache[n]

    return f


def best_integer_n(data: HedgeData, n_max: int, *, rtol: float = 1e-12) -> tuple[int, float]:
    """Ternary search for the integer BoN size with the largest true reward.

    ``f(n)`` is the pool-averaged true reward of BoN(n) using exact
    order-statistic weights over each pool's ranked atoms (with-replacement
    draws), or quadrature of ``n u**(n-1) r_t(u)`` in exact mode.  Values
    within ``rtol`` (relative) count as ties and resolve to the smaller ``n``.
    """
    if isinstance(n_max, bool) or int(n_max) != n_max or n_max < 1:
        raise DomainError(f"n_max must be an integer >= 1, got {n_max!r}")
    f = _integer_curve(data)

    def tie_or_less(a: float, b: float) -> bool:
        return a < b and not math.isclose(a, b, rel_tol=rtol, abs_tol=0.0)

    lo, hi = 1, int(n_max)
    while hi - lo > 2:
        m1 = lo + (hi - lo) // 3
        m2 = hi - (hi - lo) // 3
        if tie_or_less(f(m1), f(m2)):
            lo = m1 + 1
        elif tie_or_less(f(m2), f(m1)):
            hi = m2 - 1
        else:
            hi = m2
    best = lo
    for k in range(lo + 1, hi + 1):
        if tie_or_less(f(best), f(k)):
            best = k
    return best, f(best)


def classify_regime(
    data: HedgeData,
    method,
    theta_grid: Sequence[float],
    cfg: McConfig | None = None,
    *,
    n: int | None = None,
) -> Regime:
    """Shape of ``f`` over ``theta_grid`` from its end slopes.

    Slopes within one standard error of zero inherit the sign of the nearest
    significant interior slope.
    """
    grid = np.asarray(theta_grid, dtype=float)
    if grid.ndim != 1 or grid.size < 8:
        raise ConfigurationError("classify_regime needs a grid of at least 8 points")
    if np.any(np.diff(grid) <= 0):
        raise ConfigurationError("theta_grid must be strictly increasing")
    F = truth_curve(method, grid, data, cfg, n=n)  # (grid, pools)
    D = np.diff(F, axis=0)
    scale = max(float(np.abs(F).max()), 1e-300)
    signs = []
    for d in D:
        est = Estimate.from_replicates(d)
        s = _sign(est)
        if abs(est.mean) <= 1e-12 * scale:
            s = 0
        signs.append(s)
    first = next((s for s in signs if s != 0), 0)
    last = next((s for s in reversed(signs) if s != 0), 0)
    return Regime.from_signs(first, last)
