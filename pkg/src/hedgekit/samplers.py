"""Selection policies applied to concrete candidate pools.

A :class:`CandidatePool` stands in for the reference policy: working subsets
are drawn from it uniformly *with* replacement, which mirrors the i.i.d.
draws of the idealized algorithms.  Softmax selection acts on the pool's
quantiles when they are populated and on the raw proxy scores otherwise.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._utils import check_seed, key_of, stream
from .exceptions import ConfigurationError, DataError, DomainError
from .policies import PolicyKind, PolicySpec
from .quantiles import to_quantiles

# fraction of capped Poisson draws above which results are flagged as unreliable
CAP_WARN_FRACTION = 1e-3


class PoolCapWarning(UserWarning):
    """Poisson pool sizes exceeded the finite pool too often."""


@dataclass(frozen=True)
class Candidate:
    candidate_id: str
    proxy: float
    truth: float | None = None


@dataclass(frozen=True)
class CandidatePool:
    """All scored responses for one prompt."""

    prompt_id: str
    candidates: tuple[Candidate, ...]
    quantiles: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        cands = tuple(self.candidates)
        object.__setattr__(self, "candidates", cands)
        if not cands:
            raise DataError(f"pool {self.prompt_id!r} is empty")
        ids = [c.candidate_id for c in cands]
        if len(set(ids)) != len(ids):
            raise DataError(f"duplicate candidate_id in pool {self.prompt_id!r}")
        if self.quantiles is not None:
            q = np.asarray(self.quantiles, dtype=float)
            if q.shape != (len(cands),):
                raise DataError("quantiles must align with candidates")
            if np.any((q <= 0) | (q >= 1)):
                raise DataError("quantiles must lie strictly inside (0, 1)")
            p = self.proxies
            order = np.argsort(p, kind="stable")
            ps, qs = p[order], q[order]
            strict = ps[1:] > ps[:-1]
            if np.any(qs[1:][strict] <= qs[:-1][strict]):
                raise DataError("quantiles do not preserve the proxy rank order")
            object.__setattr__(self, "quantiles", q)

    @classmethod
    def from_arrays(cls, prompt_id: str, proxies, truths=None, ids=None, *, with_quantiles=True):
        proxies = np.asarray(proxies, dtype=float)
        if ids is None:
            ids = [str(i) for i in range(proxies.size)]
        if truths is None:
            truths = [None] * proxies.size
        cands = tuple(
            Candidate(str(i), float(p), None if t is None else float(t))
            for i, p, t in zip(ids, proxies, truths)
        )
        pool = cls(prompt_id, cands)
        return pool.with_quantiles() if with_quantiles else pool

    def __len__(self) -> int:
        return len(self.candidates)

    @property
    def proxies(self) -> np.ndarray:
        return np.array([c.proxy for c in self.candidates], dtype=float)

    @property
    def truths(self) -> np.ndarray:
        if any(c.truth is None for c in self.candidates):
            raise DataError(f"pool {self.prompt_id!r} lacks true scores")
        return np.array([c.truth for c in self.candidates], dtype=float)

    @property
    def has_truth(self) -> bool:
        return all(c.truth is not None for c in self.candidates)

    def with_quantiles(self, rule: str = "midpoint") -> CandidatePool:
        q = to_quantiles(self.proxies, rule=rule, warn_small=len(self) > 1)
        return CandidatePool(self.prompt_id, self.candidates, q)

    def rewards(self) -> np.ndarray:
        """Scores used for softmax selection: quantiles if present, else raw proxies."""
        return self.quantiles if self.quantiles is not None else self.proxies


@dataclass(frozen=True)
class Selection:
    """Outcome of one policy application.

    ``chosen_index`` indexes ``pool.candidates``; ``subset`` holds the
    drawn working subset (pool indices, with repetition).
    """

    chosen_index: int
    pool_size_used: int
    policy: PolicySpec
    seed: int | None
    subset: tuple[int, ...] = ()
    capped: bool = False


def sample_poisson_size(mu: float, rng: np.random.Generator) -> int:
    """Pool size ``1 + Poisson(mu)``."""
    mu = float(mu)
    if not math.isfinite(mu) or mu < 0:
        raise DomainError(f"mu must be finite and >= 0, got {mu!r}")
    return 1 + int(rng.poisson(mu))


def choose_argmax(proxies: Sequence[float]) -> int:
    """Index of the largest proxy; ties go to the lowest index."""
    arr = np.asarray(proxies, dtype=float)
    if arr.size == 0:
        raise DomainError("cannot select from an empty list")
    return int(np.argmax(arr))


def choose_softmax(proxies: Sequence[float], lam: float, rng: np.random.Generator) -> int:
    """Draw an index with probability proportional to ``exp(lam * proxy)``."""
    arr = np.asarray(proxies, dtype=float)
    if arr.size == 0:
        raise DomainError("cannot select from an empty list")
    lam = float(lam)
    if not math.isfinite(lam) or lam < 0:
        raise DomainError(f"lambda must be finite and >= 0, got {lam!r}")
    z = lam * arr
    w = np.exp(z - z.max())
    cdf = np.cumsum(w)
    idx = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return min(idx, arr.size - 1)


def _as_rng(rng) -> tuple[np.random.Generator, int | None]:
    if isinstance(rng, np.random.Generator):
        return rng, None
    seed = check_seed(rng)
    return stream(seed), seed


def select(policy: PolicySpec, pool: CandidatePool, rng) -> Selection:
    """Apply ``policy`` to ``pool``.

    Args:
        policy: BoN, SBoN, BoP or SBoP spec.
        pool: the candidate pool.
        rng: a ``numpy.random.Generator`` or an integer seed.

    Raises:
        ConfigurationError: BoN/SBoN with ``n`` above the pool length, a
            non-integer ``n``, or an unsupported kind.
    """
    rng, seed = _as_rng(rng)
    k = len(pool)
    capped = False
    if policy.kind in (PolicyKind.BON, PolicyKind.SBON):
        if policy.n != int(policy.n):
            raise ConfigurationError(f"selection needs an integer n, got {policy.n}")
        size = int(policy.n)
        if size > k:
            raise ConfigurationError(f"n={size} exceeds pool {pool.prompt_id!r} of length {k}")
    elif policy.kind in (PolicyKind.BOP, PolicyKind.SBOP):
        size = sample_poisson_size(policy.mu, rng)
        if size > k:
            size, capped = k, True
    else:
        raise ConfigurationError(f"{policy.kind.value} cannot be sampled from a finite pool")

    subset = rng.integers(0, k, size=size)
    rewards = pool.rewards()[subset]
    if policy.kind in (PolicyKind.BON, PolicyKind.BOP):
        pos = choose_argmax(rewards)
    else:
        pos = choose_softmax(rewards, policy.lam, rng)
    return Selection(int(subset[pos]), size, policy, seed, tuple(int(i) for i in subset), capped)


def select_many(
    policy: PolicySpec, pools: Sequence[CandidatePool], seed: int, repetitions: int = 1
) -> list[Selection]:
    """Select ``repetitions`` times from every pool.

    Selection ``(pool, r)`` uses the stream ``(seed, key(prompt_id), r)`` so
    the output does not depend on evaluation order.  Warns with
    :class:`PoolCapWarning` when more than 0.1% of Poisson draws were capped.
    """
    seed = check_seed(seed)
    out = []
    for pool in pools:
        pkey = key_of(pool.prompt_id)
        for r in range(repetitions):
            sel = select(policy, pool, stream(seed, pkey, r))
            out.append(
                Selection(sel.chosen_index, sel.pool_size_used, policy, seed, sel.subset, sel.capped)
            )
    n_capped = sum(s.capped for s in out)
    if out and n_capped / len(out) > CAP_WARN_FRACTION:
        warnings.warn(
            f"{n_capped} of {len(out)} Poisson pool sizes were capped at the pool length",
            PoolCapWarning,
            stacklevel=2,
        )
    return out


def simulate(policy: PolicySpec, size: int, rng: np.random.Generator, chunk: int = 1 << 15) -> np.ndarray:
    """Run a policy ``size`` times against a continuous uniform reference.

    Returns the selected quantile of every run.  Pools are materialized
    explicitly (no inverse-CDF shortcut) so this is an independent check on
    the closed-form densities.
    """
    if policy.kind in (PolicyKind.BON, PolicyKind.SBON) and policy.n != int(policy.n):
        raise ConfigurationError("simulation needs an integer n")
    if policy.kind is PolicyKind.TILTED:
        raise ConfigurationError("the tilted policy has no finite-pool sampler")
    out = np.empty(size)
    for start in range(0, size, chunk):
        m = min(chunk, size - start)
        if policy.kind in (PolicyKind.BON, PolicyKind.SBON):
            N = np.full(m, int(policy.n))
        else:
            N = 1 + rng.poisson(policy.mu, size=m)
        U = rng.random((m, int(N.max())))
        mask = np.arange(U.shape[1])[None, :] < N[:, None]
        if policy.kind in (PolicyKind.BON, PolicyKind.BOP):
            out[start : start + m] = np.where(mask, U, -np.inf).max(axis=1)
        else:
            z = np.where(mask, policy.lam * U, -np.inf)
            w = np.exp(z - z.max(axis=1, keepdims=True))
            cdf = np.cumsum(w, axis=1)
            r = rng.random(m)[:, None] * cdf[:, -1:]
            idx = np.minimum((cdf <= r).sum(axis=1), U.shape[1] - 1)
            out[start : start + m] = U[np.arange(m), idx]
    return out
