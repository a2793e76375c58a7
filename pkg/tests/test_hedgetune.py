import math

import numpy as np
import pytest

from hedgekit.exceptions import ConfigurationError, DataError, DomainError
from hedgekit.hedgetune import (
    HedgeData,
    Regime,
    _integer_curve,
    best_integer_n,
    classify_regime,
    expected_truth,
    find_threshold,
    residual,
)
from hedgekit.policies import PolicySpec, policy_mean
from hedgekit.samplers import CandidatePool
from hedgekit.softmax import McConfig
from hedgekit.toy import toy_bon_optimum, toy_truth
from tests import oracles

TOY = HedgeData.exact(lambda u: toy_truth(u, 12.0))
LINEAR = HedgeData.exact(lambda u: np.asarray(u, dtype=float))
DECLINE = HedgeData.exact(lambda u: 1.0 - np.asarray(u, dtype=float))
BOWL = HedgeData.exact(lambda u: (2 * np.asarray(u, dtype=float) - 1) ** 2)
CONST = HedgeData.exact(lambda u: np.full(np.shape(u), 0.7))

BON_GRID = np.geomspace(1, 100, 40)
BOP_GRID = np.geomspace(0.1, 200, 40)


def sampled_data(truth, prompts=20, k=256, seed=0):
    rng = np.random.default_rng(seed)
    pools = []
    for t in range(prompts):
        u = rng.random(k)
        pools.append(CandidatePool.from_arrays(f"p{t}", u, truth(u)))
    return HedgeData.from_pools(pools)


def sign_changes(values, atol=0.0):
    s = np.sign(np.where(np.abs(values) <= atol, 0.0, values))
    s = s[s != 0]
    return int(np.sum(s[1:] != s[:-1]))


class TestResidual:
    def test_toy_root(self):
        assert abs(residual("bon", math.sqrt(156), TOY).mean) <= 1e-4

    @pytest.mark.parametrize("method,theta", [("bon", 1.0), ("bon", 7.5), ("bop", 0.0), ("bop", 3.0), ("bop", 90.0)])
    def test_constant_truth(self, method, theta):
        est = residual(method, theta, CONST)
        assert abs(est.mean) <= 3 * est.se + 1e-12

    def test_constant_truth_sampled(self):
        data = sampled_data(lambda u: np.full(u.shape, 2.0))
        for method in ("bon", "bop"):
            for theta in (1.0, 4.0, 30.0):
                est = residual(method, theta, data)
                assert abs(est.mean) <= 3 * est.se + 1e-12

    def test_constant_truth_sbon(self):
        est = residual("sbon", 2.0, CONST, McConfig(samples=2000, seed=1), n=4)
        assert abs(est.mean) <= 3 * est.se + 1e-12

    @pytest.mark.parametrize("mu", [0.01, 0.5, 1.0, 4.0, 20.0, 150.0])
    def test_bop_linear_is_mean_derivative(self, mu):
        h = 1e-5 * max(1.0, mu)
        fd = (policy_mean(PolicySpec.bop(mu + h)) - policy_mean(PolicySpec.bop(mu - h))) / (2 * h)
        got = residual("bop", mu, LINEAR).mean
        assert got > 0
        assert got == pytest.approx(fd, rel=1e-6)

    @pytest.mark.parametrize("a", [1.0, 3.0, 12.0, 60.0])
    def test_bon_linear_is_mean_derivative(self, a):
        # d/da a/(a+1) = 1/(a+1)^2
        assert residual("bon", a, LINEAR).mean == pytest.approx(1 / (a + 1) ** 2, rel=1e-10)

    def test_domain(self):
        with pytest.raises(DomainError):
            residual("bon", 0.5, TOY)
        with pytest.raises(DomainError):
            residual("bop", -1.0, TOY)
        with pytest.raises(ConfigurationError):
            residual("tilted", 1.0, TOY)
        with pytest.raises(ConfigurationError):
            residual("sbon", 1.0, TOY)

    def test_sbon_lambda_zero_is_subset_covariance(self):
        data = sampled_data(lambda u: np.sin(3 * u), prompts=6, k=64, seed=3)
        n = 4
        est = residual("sbon", 0.0, data, McConfig(samples=20_000, seed=2), n=n)
        # E of the within-subset covariance under uniform draws with replacement
        ref = np.mean([(n - 1) / n * np.cov(p.quantiles, r, bias=True)[0, 1] for p, r in zip(data.pools, data.true_by_quantile)])
        assert abs(est.mean - ref) <= 3 * est.se

    def test_sbon_sign_matches_curve(self):
        cfg = McConfig(samples=20_000, seed=4)
        lo = residual("sbon", 1.0, TOY, cfg, n=8)
        hi = residual("sbon", 80.0, TOY, cfg, n=8)
        assert lo.mean > 3 * lo.se and hi.mean < -3 * hi.se


class TestHedgeData:
    def test_requires_truth(self):
        pool = CandidatePool.from_arrays("p", [1.0, 2.0])
        with pytest.raises(DataError):
            HedgeData.from_pools([pool])

    def test_empty(self):
        with pytest.raises(DataError):
            HedgeData((), ())


class TestFindThreshold:
    def test_toy_bon(self):
        res = find_threshold("bon", TOY, (1, 100), 1e-3)
        assert res.converged and res.regime is Regime.REWARD_HACKING
        assert abs(res.theta_dagger - toy_bon_optimum(12)) <= 0.01
        assert abs(residual("bon", res.theta_dagger, TOY).mean) <= 1e-4
        assert len(res.residual_trace) == res.iterations + 2

    def test_toy_bop_against_grid(self):
        res = find_threshold("bop", TOY, (0.1, 200), 1e-4)
        grid = np.arange(0.1, 200.0, 0.01)
        best = oracles.grid_argmax(lambda m: expected_truth("bop", m, TOY).mean, grid)
        assert res.converged and abs(res.theta_dagger - best) <= 0.05

    @pytest.mark.parametrize("method,bracket", [("bon", (1, 100)), ("bop", (0.1, 200)), ("bon", (3, 7))])
    def test_linear_no_root(self, method, bracket):
        res = find_threshold(method, LINEAR, bracket)
        assert not res.converged
        assert res.regime is Regime.MONOTONIC_IMPROVEMENT
        assert res.theta_dagger == bracket[1]

    def test_decline_recommends_low_end(self):
        res = find_threshold("bon", DECLINE, (1, 100))
        assert res.regime is Regime.IMMEDIATE_DECLINE and res.theta_dagger == 1.0

    def test_grokking_returns_better_end(self):
        res = find_threshold("bon", BOWL, (1, 100))
        assert res.regime is Regime.REWARD_GROKKING and not res.converged
        f = {t: expected_truth("bon", t, BOWL).mean for t in (1.0, 100.0)}
        assert res.theta_dagger == max(f, key=f.get)

    def test_sbon_toy(self):
        res = find_threshold("sbon", TOY, (0.0, 100.0), 1e-2, McConfig(samples=4000, seed=0), n=64)
        assert res.converged and res.regime is Regime.REWARD_HACKING
        assert 0 < res.theta_dagger < 100
        assert res.mc_samples == 4000 and res.seed == 0

    def test_bad_bracket(self):
        with pytest.raises(ConfigurationError):
            find_threshold("bon", TOY, (5, 5))
        with pytest.raises(ConfigurationError):
            find_threshold("bon", TOY, (1, 5), tol=0)

    @pytest.mark.parametrize("seed", range(5))
    @pytest.mark.parametrize("method,bracket", [("bon", (1.0, 100.0)), ("bop", (0.1, 200.0))])
    def test_root_matches_grid_argmax(self, seed, method, bracket):
        data = HedgeData.exact(oracles.piecewise_truth(seed))
        res = find_threshold(method, data, bracket, 1e-4)
        grid = np.arange(bracket[0], bracket[1] + 1e-9, 0.05)
        best = oracles.grid_argmax(lambda t: expected_truth(method, t, data).mean, grid)
        assert abs(res.theta_dagger - best) <= 0.05

    def test_scale_invariance(self):
        for c in (1e-3, 7.0):
            a = find_threshold("bop", TOY, (0.1, 200), 1e-4)
            b = find_threshold("bop", TOY.scaled(c), (0.1, 200), 1e-4)
            assert b.theta_dagger == pytest.approx(a.theta_dagger, abs=1e-4)
            assert b.regime is a.regime
        data = sampled_data(lambda u: toy_truth(u), prompts=5, k=128)
        assert best_integer_n(data.scaled(3.0), 40)[0] == best_integer_n(data, 40)[0]
        assert classify_regime(data.scaled(3.0), "bon", BON_GRID) is classify_regime(data, "bon", BON_GRID)


class TestBestIntegerN:
    def test_toy_tie(self):
        n, value = best_integer_n(TOY, 64)
        f12 = expected_truth("bon", 12, TOY).mean
        f13 = expected_truth("bon", 13, TOY).mean
        assert n == 12
        assert f12 == pytest.approx(f13, rel=1e-12)
        assert value == pytest.approx(f12, rel=1e-12)

    def test_monotone_truths(self):
        assert best_integer_n(LINEAR, 16)[0] == 16
        assert best_integer_n(DECLINE, 16)[0] == 1

    def test_n_max_one(self):
        assert best_integer_n(TOY, 1)[0] == 1

    @pytest.mark.parametrize("n_max", [0, -3, 2.5, True])
    def test_domain(self, n_max):
        with pytest.raises(DomainError):
            best_integer_n(TOY, n_max)

    @pytest.mark.parametrize("n", [1, 2, 3, 4])
    def test_order_weights_against_enumeration(self, n):
        truths = np.array([0.3, 0.9, 0.1, 0.5, 0.7])
        pool = CandidatePool.from_arrays("p", np.arange(truths.size, dtype=float), truths)
        data = HedgeData.from_pools([pool])
        ref = float(np.dot(oracles.bon_max_rank_pmf(truths.size, n), truths))
        assert _integer_curve(data)(n) == pytest.approx(ref, rel=1e-13)

    def test_matches_brute_force_argmax(self):
        data = sampled_data(lambda u: toy_truth(u), prompts=8, k=200, seed=5)
        f = _integer_curve(data)
        brute = max(range(1, 65), key=lambda k: (f(k), -k))
        assert best_integer_n(data, 64)[0] == brute


class TestClassifyRegime:
    @pytest.mark.parametrize(
        "data,expected",
        [(TOY, Regime.REWARD_HACKING), (LINEAR, Regime.MONOTONIC_IMPROVEMENT), (DECLINE, Regime.IMMEDIATE_DECLINE), (BOWL, Regime.REWARD_GROKKING)],
    )
    def test_canonical_bon(self, data, expected):
        assert classify_regime(data, "bon", BON_GRID) is expected

    def test_toy_bop(self):
        assert classify_regime(TOY, "bop", BOP_GRID) is Regime.REWARD_HACKING

    def test_sampled_toy(self):
        data = sampled_data(lambda u: toy_truth(u), prompts=30, k=512, seed=1)
        assert classify_regime(data, "bon", BON_GRID) is Regime.REWARD_HACKING

    def test_grid_validation(self):
        with pytest.raises(ConfigurationError):
            classify_regime(TOY, "bon", np.linspace(1, 10, 7))
        with pytest.raises(ConfigurationError):
            classify_regime(TOY, "bon", np.linspace(10, 1, 9))


@pytest.mark.xfail(
    strict=True,
    reason="bounded piecewise-linear truths can give several sign changes of the residual (e.g. seed 47)",
)
@pytest.mark.parametrize("method,grid", [("bon", np.geomspace(1, 200, 300)), ("bop", np.geomspace(0.05, 300, 300))])
def test_single_crossing_over_random_truths(method, grid):
    bad = []
    for seed in range(50):
        data = HedgeData.exact(oracles.piecewise_truth(seed))
        r = np.array([residual(method, t, data).mean for t in grid])
        if sign_changes(r, atol=1e-14) > 1:
            bad.append(seed)
    assert not bad, f"multiple sign changes for seeds {bad}"
