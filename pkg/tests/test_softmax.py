import math

import numpy as np
import pytest

from hedgekit.exceptions import ConfigurationError, DomainError
from hedgekit.policies import PolicySpec, policy_kl, policy_mean
from hedgekit.softmax import Estimate, McConfig, log_partition, sbon_mean_kl, sbop_mean_kl
from tests import oracles

CFG = McConfig(samples=200_000, seed=11)


def close(est: Estimate, target: float, k: float = 3.0, slack: float = 1e-12) -> bool:
    return abs(est.mean - target) <= k * est.se + slack


class TestLogPartition:
    def test_single_draw(self):
        # E[lam U] = lam / 2
        assert close(log_partition(1, 3.0, CFG), 1.5)

    def test_zero_lambda_is_log_n(self):
        est = log_partition(5, 0.0, CFG)
        assert est.mean == pytest.approx(math.log(5), rel=1e-15) and est.se == 0.0

    def test_frozen_reference(self):
        est = log_partition(4, 4.0, CFG)
        tol = 3 * math.hypot(est.se, oracles.LOG_PARTITION_4_4_SE)
        assert abs(est.mean - oracles.LOG_PARTITION_4_4) <= tol

    @pytest.mark.parametrize("n,lam", [(0, 1.0), (2.5, 1.0), (2, -1.0), (2, math.inf)])
    def test_domain(self, n, lam):
        with pytest.raises(DomainError):
            log_partition(n, lam, CFG)


class TestSbon:
    @pytest.mark.parametrize("lam", [0.5, 2.0, 6.0])
    def test_n2_against_quadrature(self, lam):
        est = sbon_mean_kl(2, lam, CFG)
        assert close(est.mean, oracles.quad(lambda x: x * oracles.sbon2_density(lam, x)))
        # the conditional KL dominates the KL of the selected quantile
        marginal = oracles.kl_of_density(lambda x: oracles.sbon2_density(lam, x))
        assert est.kl.mean > marginal + 3 * est.kl.se

    @pytest.mark.parametrize("lam", [0.5, 2.0, 6.0])
    def test_n2_conditional_kl_by_quadrature(self, lam):
        # E over (U1, U2) of sum_i p_i log(2 p_i), with p_1 = sigmoid(lam (U1 - U2))
        def cond(d):
            p = 1.0 / (1.0 + math.exp(-lam * d))
            q = 1.0 - p
            return sum(x * math.log(2 * x) for x in (p, q) if x > 0)

        # U1 - U2 has the triangular density 1 - |d| on [-1, 1]
        ref = oracles.quad(lambda d: cond(d) * (1 - abs(d)), -1.0, 1.0)
        assert close(sbon_mean_kl(2, lam, CFG).kl, ref)

    @pytest.mark.parametrize("n,lam", [(1, 0.0), (1, 5.0), (4, 0.0), (9, 0.0)])
    def test_trivial_kl_is_exactly_zero(self, n, lam):
        est = sbon_mean_kl(n, lam, McConfig(samples=5000, seed=3))
        assert est.kl.mean == 0.0
        assert close(est.mean, 0.5)

    @pytest.mark.parametrize("n,lam", [(2, 1.0), (4, 4.0), (8, 20.0)])
    def test_kl_identity(self, n, lam):
        est = sbon_mean_kl(n, lam, CFG)
        L = log_partition(n, lam, CFG)
        assert est.kl.mean == pytest.approx(math.log(n) + lam * est.mean.mean - L.mean, abs=1e-12)

    @pytest.mark.parametrize("n", [2, 4, 8])
    def test_hard_limit_is_bon(self, n):
        est = sbon_mean_kl(n, 1e4, McConfig(samples=100_000, seed=5))
        spec = PolicySpec.bon(n)
        assert close(est.mean, policy_mean(spec), slack=1e-3)
        # near-ties within 1/lam of each other keep the choice soft: O(n^2 / lam)
        assert close(est.kl, math.log(n), slack=n * n / 1e4)
        assert est.kl.mean > policy_kl(spec)

    def test_kl_increases_with_lambda(self):
        kls = [sbon_mean_kl(4, lam, CFG).kl.mean for lam in (0.5, 1, 2, 4, 8, 16)]
        assert np.all(np.diff(kls) > 0)

    def test_antithetic_is_consistent_and_tighter(self):
        plain = sbon_mean_kl(4, 3.0, McConfig(samples=50_000, seed=8))
        anti = sbon_mean_kl(4, 3.0, McConfig(samples=50_000, seed=8, antithetic=True))
        assert abs(plain.mean.mean - anti.mean.mean) <= 3 * math.hypot(plain.mean.se, anti.mean.se)
        assert anti.mean.se < plain.mean.se


class TestSbop:
    def test_zero_rate_is_single_draw(self):
        est = sbop_mean_kl(0.0, 7.0, McConfig(samples=20_000, seed=2))
        assert est.kl.mean == 0.0
        assert close(est.mean, 0.5)

    def test_zero_lambda(self):
        est = sbop_mean_kl(3.0, 0.0, McConfig(samples=20_000, seed=2))
        assert est.kl.mean == pytest.approx(0.0, abs=1e-15)

    @pytest.mark.parametrize("mu", [1.0, 4.0])
    def test_hard_limit_matches_bop_mean(self, mu):
        # the selected quantile converges to BoP; the conditional KL stays an upper bound
        est = sbop_mean_kl(mu, 1e4, McConfig(samples=200_000, seed=9))
        assert close(est.mean, policy_mean(PolicySpec.bop(mu)), slack=1e-3)
        assert est.kl.mean >= policy_kl(PolicySpec.bop(mu)) - 3 * est.kl.se

    def test_domain(self):
        with pytest.raises(DomainError):
            sbop_mean_kl(-1.0, 1.0, CFG)


class TestDeterminism:
    def test_replay(self):
        a = sbon_mean_kl(6, 2.5, McConfig(samples=70_000, seed=42))
        b = sbon_mean_kl(6, 2.5, McConfig(samples=70_000, seed=42))
        assert a == b

    def test_thread_count_invariance(self, monkeypatch):
        cfg = McConfig(samples=100_000, seed=4)
        monkeypatch.setenv("HEDGEKIT_THREADS", "1")
        one = (sbop_mean_kl(3.0, 2.0, cfg), log_partition(5, 3.0, cfg))
        monkeypatch.setenv("HEDGEKIT_THREADS", "4")
        four = (sbop_mean_kl(3.0, 2.0, cfg), log_partition(5, 3.0, cfg))
        assert one == four

    def test_bad_thread_env(self, monkeypatch):
        monkeypatch.setenv("HEDGEKIT_THREADS", "zero")
        with pytest.raises(ConfigurationError):
            log_partition(2, 1.0, McConfig(samples=100_000, seed=1))


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(samples=0), dict(samples=2.5), dict(seed=-1), dict(seed=2**64), dict(seed=1.5)])
    def test_invalid(self, kw):
        with pytest.raises(ConfigurationError):
            McConfig(**kw)

    def test_estimate_within(self):
        assert Estimate(1.0, 0.1).within(1.25)
        assert not Estimate(1.0, 0.1).within(1.35)


class TestInvariants:
    def test_se_scales_as_inverse_root(self):
        ses = [sbon_mean_kl(4, 2.0, McConfig(samples=s, seed=6)).mean.se for s in (1_000, 10_000, 100_000)]
        for a, b in zip(ses, ses[1:]):
            assert 0.5 < (a / b) / math.sqrt(10) < 2

    @pytest.mark.parametrize("n", [1, 2, 4, 8])
    def test_kl_nonnegative_and_mean_monotone(self, n):
        cfg = McConfig(samples=20_000, seed=12)
        ests = [sbon_mean_kl(n, lam, cfg) for lam in (0, 0.5, 1, 2, 5)]
        for e in ests:
            assert e.kl.mean >= -3 * e.kl.se
        for a, b in zip(ests, ests[1:]):
            assert b.mean.mean >= a.mean.mean - 3 * math.hypot(a.mean.se, b.mean.se)
