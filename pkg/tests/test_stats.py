import math

import numpy as np
import pytest
from scipy import special, stats as sps

from mipbb.stats import (betainc, harmonic_mean2, paired_t_test, pareto_front, shifted_geo_mean, stars,
                         t_two_sided_p)
from oracles import student_t_p


def test_shifted_geo_mean():
    assert shifted_geo_mean([5]) == pytest.approx(5)
    assert shifted_geo_mean([0, 0, 0]) == pytest.approx(0, abs=1e-15)
    assert shifted_geo_mean([1, 3], 1) == pytest.approx(math.sqrt(8) - 1, abs=1e-9)
    with pytest.raises(ValueError):
        shifted_geo_mean([])
    with pytest.raises(ValueError):
        shifted_geo_mean([-1.0])


def test_harmonic_mean2():
    assert harmonic_mean2(3, 3) == pytest.approx(3)
    assert harmonic_mean2(2, 0.5) == pytest.approx(0.8, abs=1e-12)
    assert harmonic_mean2(5.0, 1e-12) < 1e-11
    with pytest.raises(ValueError):
        harmonic_mean2(0, 1)


@pytest.mark.parametrize("a,b,x", [(0.5, 0.5, 0.3), (2, 3, 0.9), (4.5, 0.5, 0.1), (10, 0.5, 0.99), (1, 1, 0.4)])
def test_betainc_matches_scipy(a, b, x):
    assert betainc(a, b, x) == pytest.approx(special.betainc(a, b, x), abs=1e-12)


def test_t_p_value_against_integration_oracle():
    for df in (1, 4, 9, 30):
        for t in (0.0, 0.5, 2.1, 6.0):
            assert t_two_sided_p(t, df) == pytest.approx(student_t_p(t, df), abs=1e-9)


def test_paired_t_test_fixed_vectors():
    rng = np.random.default_rng(42)
    x = rng.normal(size=10)
    y = x + rng.normal(0.4, 1.0, size=10)
    res = paired_t_test(x, y)
    ref = sps.ttest_rel(x, y)
    assert res.statistic == pytest.approx(ref.statistic, abs=1e-9)
    assert res.p_value == pytest.approx(student_t_p(res.statistic, 9), abs=1e-6)
    assert res.p_value == pytest.approx(ref.pvalue, abs=1e-9)
    assert res.df == 9


def test_paired_t_test_degenerate():
    same = paired_t_test([1, 2, 3], [1, 2, 3])
    assert (same.statistic, same.p_value, same.degenerate) == (0.0, 1.0, True)
    shift = paired_t_test([2, 3, 4, 5], [1, 2, 3, 4])
    assert shift.degenerate and shift.p_value == 0.0 and shift.statistic == math.inf
    with pytest.raises(ValueError):
        paired_t_test([1], [2])
    with pytest.raises(ValueError):
        paired_t_test([1, 2], [1, 2, 3])


def test_stars_legend():
    assert [stars(p) for p in (0.0005, 0.005, 0.03, 0.07, 0.2)] == ["***", "**", "*", "·", ""]


def test_pareto_front():
    pts = [(1, 5), (2, 2), (5, 1), (3, 3), (2, 2.5)]
    np.testing.assert_array_equal(pareto_front(pts), [True, True, True, False, False])
    np.testing.assert_array_equal(pareto_front([(1, 1), (1, 1)]), [True, True])
