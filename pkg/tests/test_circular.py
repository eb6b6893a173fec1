import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from circgof.circular import (
    TWO_PI, VonMisesParams, a1inv, bessel_ratio, circ_dist, mean_direction,
    resultant_length, sample_von_mises, wrap,
)
from circgof.errors import DegenerateDirectionError, InvalidArgumentError

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


def bessel_series(nu, x, terms=80):
    """Modified Bessel function of the first kind by its power series."""
    return sum((x / 2) ** (2 * m + nu) / (math.factorial(m) * math.gamma(m + nu + 1)) for m in range(terms))


class TestWrap:
    @pytest.mark.parametrize("x, expected", [
        (3 * math.pi, math.pi),
        (-math.pi / 2, 3 * math.pi / 2),
        (0.0, 0.0),
        (TWO_PI, 0.0),
    ])
    def test_values(self, x, expected):
        assert wrap(x) == pytest.approx(expected, abs=1e-12)

    @pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
    def test_non_finite(self, bad):
        with pytest.raises(InvalidArgumentError):
            wrap(bad)

    def test_array(self):
        out = wrap(np.array([-0.5, 7.0]))
        np.testing.assert_allclose(out, [TWO_PI - 0.5, 7.0 - TWO_PI])

    @given(finite)
    def test_idempotent_and_in_range(self, x):
        w = wrap(x)
        assert 0.0 <= w < TWO_PI
        assert wrap(w) == w


class TestCircDist:
    @pytest.mark.parametrize("a, b, expected", [
        (0.0, 0.0, 0.0),
        (0.0, math.pi, 2.0),
        (math.pi / 3, 0.0, 0.5),
    ])
    def test_values(self, a, b, expected):
        assert circ_dist(a, b) == pytest.approx(expected, abs=1e-12)

    @given(finite, finite, finite)
    def test_symmetric_and_rotation_invariant(self, a, b, c):
        assert circ_dist(a, b) == pytest.approx(circ_dist(b, a), abs=1e-12)
        assert circ_dist(a + c, b + c) == pytest.approx(circ_dist(a, b), abs=1e-8)


class TestMeanDirection:
    def test_quarter(self):
        assert mean_direction([0.0, math.pi / 2]) == pytest.approx(math.pi / 4)

    def test_identical(self):
        assert mean_direction([math.pi / 6] * 3) == pytest.approx(math.pi / 6)

    def test_degenerate(self):
        with pytest.raises(DegenerateDirectionError):
            mean_direction([0.0, math.pi])

    def test_grid_oracle(self, rng):
        grid = np.arange(10**6) * (TWO_PI / 10**6)
        for _ in range(5):
            theta = rng.vonmises(rng.uniform(0, TWO_PI), 2.0, 7)
            c, s = np.cos(theta).sum(), np.sin(theta).sum()
            # sum(1 - cos(theta - m)) = n - c cos m - s sin m
            risk = -(c * np.cos(grid) + s * np.sin(grid))
            m_grid = grid[np.argmin(risk)]
            assert circ_dist(mean_direction(theta), m_grid) < (TWO_PI * 1e-5) ** 2

    @settings(max_examples=50)
    @given(st.lists(st.floats(0, 6.28), min_size=2, max_size=10), st.floats(-10, 10))
    def test_rotation_equivariance(self, angles, c):
        if resultant_length(angles) < 1e-3:
            return
        lhs = mean_direction(np.array(angles) + c)
        rhs = wrap(mean_direction(angles) + c)
        assert circ_dist(lhs, rhs) < 1e-14 or abs(lhs - rhs) < 1e-9


class TestBessel:
    @pytest.mark.parametrize("kappa", [0.1, 1.0, 5.0, 10.0, 30.0])
    def test_ratio_against_series(self, kappa):
        expected = bessel_series(1, kappa) / bessel_series(0, kappa)
        assert bessel_ratio(kappa) == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("kappa", [0.05, 0.7, 3.0, 10.0, 250.0])
    def test_inverse_round_trip(self, kappa):
        assert a1inv(bessel_ratio(kappa)) == pytest.approx(kappa, rel=1e-8)

    def test_inverse_edges(self):
        assert a1inv(0.0) == 0.0
        assert a1inv(-0.2) == 0.0
        assert a1inv(1.0) == 1e6


class TestVonMises:
    def test_negative_kappa(self):
        with pytest.raises(InvalidArgumentError):
            VonMisesParams(0.0, -1.0)

    def test_uniform_limit(self, rng):
        draws = sample_von_mises(VonMisesParams(0.0, 0.0), 10**5, rng)
        assert resultant_length(draws) < 0.02

    def test_concentration(self, rng):
        draws = sample_von_mises(VonMisesParams(0.0, 10.0), 10**5, rng)
        rho = bessel_series(1, 10.0) / bessel_series(0, 10.0)
        assert rho == pytest.approx(0.9486, abs=1e-4)
        assert circ_dist(mean_direction(draws), 0.0) < 1 - math.cos(0.02)
        assert resultant_length(draws) == pytest.approx(rho, abs=0.02)

    def test_location_shift(self, rng):
        draws = sample_von_mises(VonMisesParams(math.pi, 10.0), 10**5, rng)
        assert mean_direction(draws) == pytest.approx(math.pi, abs=0.02)

    def test_range(self, rng):
        draws = sample_von_mises(VonMisesParams(6.0, 1.0), 1000, rng)
        assert np.all((draws >= 0) & (draws < TWO_PI))
