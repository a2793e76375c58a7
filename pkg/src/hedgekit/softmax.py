"""Monte Carlo analytics for Soft Best-of-n and Soft Best-of-Poisson.

Both estimators work through the log-partition function
``L(n, lam) = E[log sum_i exp(lam * U_i)]`` over ``n`` i.i.d. uniforms.  The
expected selected quantile is estimated pathwise by the softmax-weighted
average of the pool (the derivative of ``log sum exp`` in ``lam``), and the
KL divergence per pool is ``log n + lam * m - log sum exp(lam * U)``.

That KL is the conditional one: the divergence of the softmax choice from a
uniform choice, averaged over pools.  It bounds the KL of the selected
quantile's marginal law from above and tends to ``log n`` (not the BoN value
``log n - (n - 1) / n``) as ``lam`` grows.

Replicates are grouped into fixed-size chunks; chunk ``c`` draws from the
stream ``(seed, c)``.  Results are therefore identical for any thread count.
Because the uniforms depend only on the seed, estimates at different ``lam``
(or ``n`` within a chunk layout) share random numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._utils import check_seed, ordered_map, stream
from .exceptions import ConfigurationError, DomainError

CHUNK = 1 << 15


@dataclass(frozen=True)
class McConfig:
    """Monte Carlo controls.

    With ``antithetic=True`` each replicate averages a draw ``U`` with its
    mirror ``1 - U``; ``samples`` still counts replicates.
    """

    samples: int = 100_000
    seed: int = 0
    antithetic: bool = False

    def __post_init__(self):
        if isinstance(self.samples, bool) or int(self.samples) != self.samples or self.samples < 1:
            raise ConfigurationError(f"samples must be a positive integer, got {self.samples!r}")
        object.__setattr__(self, "samples", int(self.samples))
        object.__setattr__(self, "seed", check_seed(self.seed))


@dataclass(frozen=True)
class Estimate:
    """Sample mean of i.i.d. replicates with its standard error."""

    mean: float
    se: float

    @classmethod
    def from_replicates(cls, values: np.ndarray) -> Estimate:
        values = np.asarray(values, dtype=float)
        if values.size < 2 or np.all(values == values[0]):
            return cls(float(values.mean()), 0.0)
        return cls(float(values.mean()), float(values.std(ddof=1) / math.sqrt(values.size)))

    def within(self, target: float, k: float = 3.0) -> bool:
        return abs(self.mean - target) <= k * self.se


@dataclass(frozen=True)
class SoftEstimate:
    """Expected selected quantile and KL divergence, each with an SE."""

    mean: Estimate
    kl: Estimate


def _chunks(samples: int) -> list[int]:
    full, rest = divmod(samples, CHUNK)
    return [CHUNK] * full + ([rest] if rest else [])


def _pool_stats(U: np.ndarray, lam: float, mask: np.ndarray | None = None):
    """Per-row log-sum-exp of ``lam*U`` and softmax-weighted mean of ``U``."""
    z = lam * U
    if mask is not None:
        z = np.where(mask, z, -np.inf)
    zmax = z.max(axis=1, keepdims=True)
    w = np.exp(z - zmax)
    s = w.sum(axis=1)
    lse = zmax[:, 0] + np.log(s)
    if mask is not None:
        U = np.where(mask, U, 0.0)
    m = (w * U).sum(axis=1) / s
    return lse, m


def _run(cfg: McConfig, draw, per_replicate) -> list[np.ndarray]:
    sizes = _chunks(cfg.samples)

    def work(c: int):
        rng = stream(cfg.seed, c)
        batch = draw(rng, sizes[c])
        out = per_replicate(*batch)
        if cfg.antithetic:
            mirrored = (1.0 - batch[0],) + tuple(batch[1:])
            out2 = per_replicate(*mirrored)
            out = tuple(0.5 * (a + b) for a, b in zip(out, out2))
        return out

    results = ordered_map(work, len(sizes))
    return [np.concatenate(parts) for parts in zip(*results)]


def _check_n_lam(n, lam):
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise DomainError(f"n must be an integer >= 1, got {n!r}")
    lam = float(lam)
    if not math.isfinite(lam) or lam < 0:
        raise DomainError(f"lambda must be finite and >= 0, got {lam!r}")
    return int(n), lam


def log_partition(n: int, lam: float, cfg: McConfig) -> Estimate:
    """Estimate ``E[log sum_{i<=n} exp(lam * U_i)]`` for ``U_i ~ Unif[0, 1]``."""
    n, lam = _check_n_lam(n, lam)

    def draw(rng, size):
        return (rng.random((size, n)),)

    def rep(U):
        return (_pool_stats(U, lam)[0],)

    (vals,) = _run(cfg, draw, rep)
    return Estimate.from_replicates(vals)


def sbon_mean_kl(n: int, lam: float, cfg: McConfig) -> SoftEstimate:
    """Expected selected quantile and conditional KL (nats) of Soft Best-of-n."""
    n, lam = _check_n_lam(n, lam)
    log_n = math.log(n)

    def draw(rng, size):
        return (rng.random((size, n)),)

    def rep(U):
        lse, m = _pool_stats(U, lam)
        return m, log_n + lam * m - lse

    means, kls = _run(cfg, draw, rep)
    return SoftEstimate(Estimate.from_replicates(means), Estimate.from_replicates(kls))


def sbop_mean_kl(mu: float, lam: float, cfg: McConfig) -> SoftEstimate:
    """Expected selected quantile and conditional KL (nats) of Soft Best-of-Poisson.

    Each replicate draws its own pool size ``N = 1 + Poisson(mu)`` and uses
    the realized ``log N`` in the conditional KL identity.
    """
    mu = float(mu)
    if not math.isfinite(mu) or mu < 0:
        raise DomainError(f"mu must be finite and >= 0, got {mu!r}")
    _, lam = _check_n_lam(1, lam)

    def draw(rng, size):
        N = 1 + rng.poisson(mu, size=size)
        width = int(N.max())
        U = rng.random((size, width))
        return U, N

    def rep(U, N):
        mask = np.arange(U.shape[1])[None, :] < N[:, None]
        lse, m = _pool_stats(U, lam, mask)
        return m, np.log(N) + lam * m - lse

    means, kls = _run(cfg, draw, rep)
    return SoftEstimate(Estimate.from_replicates(means), Estimate.from_replicates(kls))
