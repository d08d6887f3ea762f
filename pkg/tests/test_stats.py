import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, special, stats

from linfshape.errors import InvalidArgumentError
from linfshape.stats import betainc_reg, student_t_sf, t_test_greater


def t_sf_quadrature(t, df):
    c = math.exp(math.lgamma((df + 1) / 2) - math.lgamma(df / 2)) / math.sqrt(df * math.pi)
    dens = lambda x: c * (1 + x * x / df) ** (-(df + 1) / 2)
    val, _ = integrate.quad(dens, t, math.inf, epsabs=1e-13, epsrel=1e-12)
    return val


class TestBeta:
    @given(st.floats(0.1, 50), st.floats(0.1, 50), st.floats(0, 1))
    def test_matches_scipy(self, a, b, x):
        assert betainc_reg(a, b, x) == pytest.approx(special.betainc(a, b, x), abs=1e-10)

    def test_endpoints(self):
        assert betainc_reg(2.0, 3.0, 0.0) == 0.0
        assert betainc_reg(2.0, 3.0, 1.0) == 1.0


class TestStudentT:
    @pytest.mark.parametrize("t", [-3.0, -0.4, 0.0, 0.7, 2.5, 8.0])
    @pytest.mark.parametrize("df", [1, 4, 49])
    def test_quadrature(self, t, df):
        assert student_t_sf(t, df) == pytest.approx(t_sf_quadrature(t, df), abs=1e-10)

    def test_symmetry(self):
        assert student_t_sf(1.3, 7) + student_t_sf(-1.3, 7) == pytest.approx(1.0, abs=1e-14)


class TestTTest:
    def test_example_vs_quadrature(self):
        x = np.array([1.0, 2.0, 3.0, 2.0, 2.0])
        r = t_test_greater(x)
        t = x.mean() / (x.std(ddof=1) / math.sqrt(5))
        assert r.t_statistic == pytest.approx(t, rel=1e-12)
        assert abs(r.p_value - t_sf_quadrature(t, 4)) <= 1e-6
        ref = stats.ttest_1samp(x, 0.0, alternative="greater")
        assert r.p_value == pytest.approx(ref.pvalue, rel=1e-9)

    @pytest.mark.parametrize("c, p", [(2.0, 0.0), (0.0, 0.5), (-1.0, 1.0)])
    def test_degenerate(self, c, p):
        r = t_test_greater([c] * 6)
        assert r.degenerate and r.p_value == p

    def test_too_few(self):
        with pytest.raises(InvalidArgumentError):
            t_test_greater([1.0])

    @given(st.lists(st.floats(-10, 10), min_size=3, max_size=40))
    def test_p_in_unit_interval(self, xs):
        r = t_test_greater(xs)
        assert 0.0 <= r.p_value <= 1.0
