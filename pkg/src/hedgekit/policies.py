"""Closed-form analytics of selection policies under uniform proxy quantiles.

With proxy rewards mapped to quantiles ``u ~ Unif[0, 1]`` each policy induces
a density on ``[0, 1]``:

* Best-of-n, relaxed to a real exponent ``a >= 1``: ``a * u**(a - 1)``
  (``Beta(a, 1)``).
* Best-of-Poisson with rate ``mu``: ``(mu*u + 1) * exp(mu*(u - 1))``.
* Exponential tilt with inverse temperature ``lam``:
  ``lam * exp(lam*u) / (exp(lam) - 1)``.

The soft variants (SBoN, SBoP) have no closed-form density; see
:mod:`hedgekit.softmax`.  All KL divergences are in nats against the uniform
reference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .exceptions import DomainError, UnsupportedKindError
from .special import expi, expi_scaled

# below this the closed forms lose digits to cancellation; Taylor series take over
SERIES_THRESHOLD = 1e-2

_GL_X, _GL_W = np.polynomial.legendre.leggauss(48)


class PolicyKind(str, Enum):
    BON = "bon"
    SBON = "sbon"
    BOP = "bop"
    SBOP = "sbop"
    TILTED = "tilted"

    def __str__(self) -> str:
        return self.value


_REQUIRED = {
    PolicyKind.BON: {"n"},
    PolicyKind.SBON: {"n", "lam"},
    PolicyKind.BOP: {"mu"},
    PolicyKind.SBOP: {"mu", "lam"},
    PolicyKind.TILTED: {"lam"},
}


@dataclass(frozen=True)
class PolicySpec:
    """Policy identity plus its parameters.

    ``n`` is the pool size (a real exponent for the BoN relaxation), ``mu``
    the Poisson rate and ``lam`` the inverse temperature.  Only the parameters
    used by ``kind`` may be set.
    """

    kind: PolicyKind
    n: float | None = None
    mu: float | None = None
    lam: float | None = None

    def __post_init__(self):
        kind = PolicyKind(self.kind)
        object.__setattr__(self, "kind", kind)
        given = {k for k in ("n", "mu", "lam") if getattr(self, k) is not None}
        if given != _REQUIRED[kind]:
            raise DomainError(
                f"{kind.value} takes parameters {sorted(_REQUIRED[kind])}, got {sorted(given)}"
            )
        for name in given:
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise DomainError(f"{name} must be finite, got {v!r}")
            object.__setattr__(self, name, v)
        if self.n is not None and self.n < 1:
            raise DomainError(f"n must be >= 1, got {self.n}")
        if self.mu is not None and self.mu < 0:
            raise DomainError(f"mu must be >= 0, got {self.mu}")
        if self.lam is not None and self.lam < 0:
            raise DomainError(f"lam must be >= 0, got {self.lam}")

    @classmethod
    def bon(cls, n: float) -> PolicySpec:
        return cls(PolicyKind.BON, n=n)

    @classmethod
    def sbon(cls, n: float, lam: float) -> PolicySpec:
        return cls(PolicyKind.SBON, n=n, lam=lam)

    @classmethod
    def bop(cls, mu: float) -> PolicySpec:
        return cls(PolicyKind.BOP, mu=mu)

    @classmethod
    def sbop(cls, mu: float, lam: float) -> PolicySpec:
        return cls(PolicyKind.SBOP, mu=mu, lam=lam)

    @classmethod
    def tilted(cls, lam: float) -> PolicySpec:
        return cls(PolicyKind.TILTED, lam=lam)

    @property
    def theta(self) -> float:
        """The single tuning parameter of one-parameter families."""
        if self.kind is PolicyKind.BON:
            return self.n
        if self.kind is PolicyKind.BOP:
            return self.mu
        if self.kind is PolicyKind.TILTED:
            return self.lam
        raise UnsupportedKindError(f"{self.kind.value} has two parameters")

    def with_theta(self, theta: float) -> PolicySpec:
        """Copy of this spec with the tuning parameter replaced."""
        if self.kind in (PolicyKind.BON, PolicyKind.BOP, PolicyKind.TILTED):
            key = {PolicyKind.BON: "n", PolicyKind.BOP: "mu", PolicyKind.TILTED: "lam"}[self.kind]
        else:
            key = "lam"
        params = {k: getattr(self, k) for k in ("n", "mu", "lam")}
        params[key] = theta
        return PolicySpec(self.kind, **params)


def _closed_form_kind(spec: PolicySpec) -> None:
    if spec.kind in (PolicyKind.SBON, PolicyKind.SBOP):
        raise UnsupportedKindError(
            f"{spec.kind.value} has no closed form; use hedgekit.softmax Monte Carlo estimators"
        )


def _check_u(u, *, open_left: bool = False) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(u)) or np.any(u < 0) or np.any(u > 1):
        raise DomainError("quantiles must lie in [0, 1]")
    if open_left and np.any(u == 0):
        raise DomainError("the BoN score has a log singularity at u = 0")
    return u


def _ret(x: np.ndarray):
    return float(x) if x.ndim == 0 else x


def tilted_log_partition(lam: float) -> float:
    """``log Z(lam)`` with ``Z = (e**lam - 1)/lam`` (0 at lam = 0)."""
    if lam < SERIES_THRESHOLD:
        # log Z = lam/2 + lam^2/24 - lam^4/2880 + ...
        return lam / 2 + lam**2 / 24 - lam**4 / 2880
    return lam + math.log1p(-math.exp(-lam)) - math.log(lam)


def policy_density(spec: PolicySpec, u):
    """Density of the selected quantile at ``u`` (scalar or array)."""
    _closed_form_kind(spec)
    u = _check_u(u)
    if spec.kind is PolicyKind.BON:
        a = spec.n
        out = a * np.power(u, a - 1)
    elif spec.kind is PolicyKind.BOP:
        mu = spec.mu
        out = (mu * u + 1) * np.exp(mu * (u - 1))
    else:
        lam = spec.lam
        out = np.exp(lam * u - tilted_log_partition(lam))
    return _ret(out)


def policy_log_density(spec: PolicySpec, u):
    """``log policy_density``; ``-inf`` where the density vanishes."""
    _closed_form_kind(spec)
    u = _check_u(u)
    with np.errstate(divide="ignore"):
        if spec.kind is PolicyKind.BON:
            a = spec.n
            out = math.log(a) + (a - 1) * np.log(u) if a != 1 else np.zeros_like(u)
        elif spec.kind is PolicyKind.BOP:
            mu = spec.mu
            out = np.log1p(mu * u) + mu * (u - 1)
        else:
            out = spec.lam * u - tilted_log_partition(spec.lam)
    return _ret(np.asarray(out, dtype=float))


def _bop_mean(mu: float) -> float:
    # mean = 1 - h(mu), h(mu) = (e^{-mu} - 1 + mu) / mu^2
    if mu < SERIES_THRESHOLD:
        h = 0.5 - mu / 6 + mu**2 / 24 - mu**3 / 120 + mu**4 / 720 - mu**5 / 5040
    else:
        h = (math.expm1(-mu) + mu) / mu**2
    return 1.0 - h


def _tilted_mean(lam: float) -> float:
    if lam < SERIES_THRESHOLD:
        return 0.5 + lam / 12 - lam**3 / 720 + lam**5 / 30240
    return 1.0 / -math.expm1(-lam) - 1.0 / lam


def policy_mean(spec: PolicySpec) -> float:
    """Expected selected quantile (expected proxy reward under uniform mapping)."""
    _closed_form_kind(spec)
    if spec.kind is PolicyKind.BON:
        return spec.n / (spec.n + 1)
    if spec.kind is PolicyKind.BOP:
        return _bop_mean(spec.mu)
    return _tilted_mean(spec.lam)


def _ei_gap_scaled(mu: float) -> float:
    """``exp(-mu-1) * (Ei(mu+1) - Ei(1))`` without cancellation."""
    if mu <= 8:
        # = int_0^mu exp(s - mu) / (1 + s) ds, smooth integrand
        s = 0.5 * mu * (_GL_X + 1)
        return 0.5 * mu * float(np.sum(_GL_W * np.exp(s - mu) / (1 + s)))
    return expi_scaled(mu + 1) - math.exp(-mu - 1) * expi(1.0).value


def _bop_kl(mu: float) -> float:
    if mu < SERIES_THRESHOLD:
        return mu**2 / 6 - mu**3 / 12 + mu**4 / 30 - mu**5 / 72
    return _ei_gap_scaled(mu) / mu + math.log1p(mu) - 1


def _tilted_kl(lam: float) -> float:
    if lam < SERIES_THRESHOLD:
        return lam**2 / 24 - lam**4 / 960 + lam**6 / 36288
    return lam * _tilted_mean(lam) - tilted_log_partition(lam)


def policy_kl(spec: PolicySpec) -> float:
    """KL divergence (nats) from the uniform reference."""
    _closed_form_kind(spec)
    if spec.kind is PolicyKind.BON:
        a = spec.n
        # E[ln(a u^{a-1})] with E[ln u] = -1/a under Beta(a, 1)
        return math.log(a) - (a - 1) / a
    if spec.kind is PolicyKind.BOP:
        return _bop_kl(spec.mu)
    return _tilted_kl(spec.lam)


def score(spec: PolicySpec, u):
    """Score ``d/dtheta log p_theta(u)`` for BoN (in ``n``) and BoP (in ``mu``).

    Raises:
        DomainError: ``u = 0`` under BoN.
        UnsupportedKindError: any kind other than BoN or BoP.
    """
    if spec.kind is PolicyKind.BON:
        u = _check_u(u, open_left=True)
        return _ret(1.0 / spec.n + np.log(u))
    if spec.kind is PolicyKind.BOP:
        u = _check_u(u)
        mu = spec.mu
        return _ret(u - 1 + u / (mu * u + 1))
    raise UnsupportedKindError(f"score is defined for bon and bop only, not {spec.kind.value}")
