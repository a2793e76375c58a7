import csv
import math

import numpy as np
import pytest

from hedgekit.exceptions import ConfigurationError, DomainError
from hedgekit.optimality import (
    CSV_COLUMNS,
    direct_gap,
    gap_bound,
    kl_gap_sweep,
    match_lambda,
    per_mu_sup,
    sup_log_ratio,
    write_sweep_csv,
)
from tests import oracles

mp = oracles.mp


def oracle_lambda(mu: float) -> float:
    """Root of the tilted mean minus the Poisson-mixture BoP mean, in mpmath."""
    target = mp.mpf(oracles.bop_mean(mu))
    mp.mp.dps = 40
    try:
        lam = mp.findroot(lambda l: mp.e**l / (mp.e**l - 1) - 1 / l - target, (mu / 2, 2 * mu + 2), solver="anderson")
    finally:
        mp.mp.dps = 15
    return float(lam)


def oracle_log_ratio(mu, lam, u):
    q = (mu * u + 1) * np.exp(mu * (u - 1))
    g = lam * np.exp(lam * u) / np.expm1(lam)
    return np.log(q / g)


class TestMatchLambda:
    def test_mu_one(self):
        r = match_lambda(1.0)
        assert r.mean == pytest.approx(0.6321206, abs=1e-7)
        assert r.lambda_star == pytest.approx(oracle_lambda(1.0), rel=1e-10)
        lam = r.lambda_star
        assert math.exp(lam) / math.expm1(lam) - 1 / lam == pytest.approx(r.mean, abs=1e-13)

    @pytest.mark.parametrize("mu", [0.05, 0.5, 3.0, 20.0, 90.0])
    def test_against_oracle(self, mu):
        assert match_lambda(mu).lambda_star == pytest.approx(oracle_lambda(mu), rel=1e-9)

    def test_uniform_limit(self):
        r = match_lambda(1e-4)
        assert 0 < r.lambda_star < 1e-3
        assert abs(r.kl_gap) <= 1e-6

    def test_mu_eight_within_bound(self):
        assert 0 <= match_lambda(8.0).kl_gap <= 8e-4

    @pytest.mark.parametrize("mu", [0.0, -1.0, math.inf, math.nan])
    def test_domain(self, mu):
        with pytest.raises(DomainError):
            match_lambda(mu)

    def test_bad_tol(self):
        with pytest.raises(ConfigurationError):
            match_lambda(1.0, tol=0)


class TestSweep:
    GRID = [0.5, 1, 2, 4, 8, 16, 32]

    def test_bound_and_identity(self):
        res = kl_gap_sweep(self.GRID)
        gaps = np.array([r.kl_gap for r in res])
        assert np.all(gaps >= -1e-9) and gaps.max() <= 8e-4
        for r in res:
            assert r.kl_gap - (r.kl_bop - r.kl_tilted) == pytest.approx(0.0, abs=1e-9)

    def test_lambda_increasing(self):
        lams = [r.lambda_star for r in kl_gap_sweep(np.geomspace(0.5, 32, 25))]
        assert np.all(np.diff(lams) > 0)

    @pytest.mark.parametrize("mu", [0.5, 4.0, 32.0])
    def test_against_independent_quadrature(self, mu):
        r = match_lambda(mu)
        lam = oracle_lambda(mu)
        ref = oracles.quad(lambda u: (mu * u + 1) * math.exp(mu * (u - 1)) * float(oracle_log_ratio(mu, lam, u)))
        assert r.kl_gap == pytest.approx(ref, abs=1e-8)
        assert direct_gap(mu, r.lambda_star) == pytest.approx(ref, abs=1e-8)

    def test_empty(self):
        with pytest.raises(ConfigurationError):
            kl_gap_sweep([])

    def test_csv(self, tmp_path):
        res = kl_gap_sweep([1.0, 2.0])
        path = write_sweep_csv(tmp_path / "sweep.csv", res)
        with path.open() as fh:
            rows = list(csv.reader(fh))
        assert tuple(rows[0]) == CSV_COLUMNS
        assert [float(x) for x in rows[1]] == [res[0].mu, res[0].lambda_star, res[0].mean, res[0].kl_bop, res[0].kl_tilted, res[0].kl_gap]


class TestSupLogRatio:
    def test_uniform_limit(self):
        assert per_mu_sup(1e-4) <= 1e-4
        assert per_mu_sup(1e-4, side="abs") <= 1e-4

    @pytest.mark.parametrize("mu", [0.3, 3.17, 25.0])
    @pytest.mark.parametrize("side", ["upper", "abs"])
    def test_per_mu_against_dense_grid(self, mu, side):
        lam = oracle_lambda(mu)
        v = oracle_log_ratio(mu, lam, np.linspace(0, 1, 200_001))
        ref = np.max(np.abs(v)) if side == "abs" else np.max(v)
        assert per_mu_sup(mu, side=side) == pytest.approx(ref, abs=1e-9)

    def test_full_sweep(self):
        alpha = sup_log_ratio(np.geomspace(0.01, 100, 60))
        assert abs(alpha - 0.0397) <= 5e-4
        assert gap_bound(alpha) == pytest.approx(8e-4, rel=0.1)
        # the matched gaps actually sit below the implied bound
        assert max(r.kl_gap for r in kl_gap_sweep(np.geomspace(0.5, 32, 25))) <= gap_bound(alpha)

    def test_two_sided_grows(self):
        assert per_mu_sup(100.0, side="abs") > 3.0
        assert per_mu_sup(100.0, side="abs") > per_mu_sup(10.0, side="abs")

    def test_validation(self):
        with pytest.raises(ConfigurationError):
            sup_log_ratio([1.0])
        with pytest.raises(ConfigurationError):
            sup_log_ratio([0.0, 1.0])
        with pytest.raises(ConfigurationError):
            per_mu_sup(1.0, side="lower")


def test_gap_bound_values():
    assert gap_bound(0.0) == 0.0
    # phi(t) ~ (t - 1)^2 / 2 near t = 1
    assert gap_bound(1e-3) == pytest.approx(0.5e-6, rel=1e-2)
