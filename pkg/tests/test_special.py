import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hedgekit.exceptions import DomainError
from hedgekit.special import SpecialValue, expi, expi_scaled
from tests import oracles


class TestExpiExamples:
    def test_one(self):
        # [DERIVED] series oracle
        assert expi(1.0).value == pytest.approx(1.8951178, abs=1e-6)

    def test_two(self):
        assert expi(2.0).value == pytest.approx(4.9542344, abs=1e-6)

    @pytest.mark.parametrize("z", [0.0, -1.0, 5e-9, math.inf, math.nan])
    def test_domain(self, z):
        with pytest.raises(DomainError):
            expi(z)


@pytest.mark.parametrize("z", np.concatenate([np.linspace(0.5, 50, 200), [39.999, 40.0, 40.001]]))
def test_against_mpmath(z):
    ref = oracles.ei(z)
    got = expi(float(z))
    assert abs(got.value - ref) <= max(got.abs_err_bound, 4e-16 * abs(ref))
    assert got.abs_err_bound <= 1e-10 * max(1.0, abs(ref))
    assert abs(got.value - ref) <= 1e-13 * max(1.0, abs(ref))


@given(st.floats(min_value=1e-8, max_value=500.0))
def test_scaled_matches_mpmath(z):
    ref = float(oracles.mp.exp(-z) * oracles.mp.ei(z))
    assert expi_scaled(z) == pytest.approx(ref, rel=1e-12, abs=1e-300)


def test_small_argument_log_singularity():
    z = 1e-8
    assert expi(z).value == pytest.approx(oracles.ei(z), rel=1e-14)


def test_special_value_rejects_bad_bound():
    with pytest.raises(ValueError):
        SpecialValue(1.0, -1.0)
    with pytest.raises(ValueError):
        SpecialValue(1.0, math.inf)
