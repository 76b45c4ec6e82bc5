import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from glab.disorder import (
    BoundedSymmetric,
    Gaussian,
    StretchedExp,
    draw,
    fixed_disorder,
    mean_field,
    sample_disorder,
    tail_from_dict,
    tail_log_rate,
    tail_to_dict,
    weighted_sum,
)
from glab.errors import InvalidParameterError, OutOfBoxError
from glab.green import GreenAccessor
from glab.lattice import ScalarField, make_box
from glab.rng import generator
from glab.spectral import make_plan
from glab.verify import dense_green


def test_parameter_validation():
    for bad in (lambda: StretchedExp(0.0), lambda: StretchedExp(2.5), lambda: StretchedExp(1.0, 0.0)):
        with pytest.raises(InvalidParameterError):
            bad()
    with pytest.raises(InvalidParameterError):
        Gaussian(0.0)
    with pytest.raises(InvalidParameterError):
        BoundedSymmetric(-1.0)
    with pytest.raises(InvalidParameterError):
        BoundedSymmetric(1.0, "triangle")


def test_stretched_exp_tail_empirical():
    x = draw(StretchedExp(1.0, 1.0), generator(1, "t"), 1_000_000)
    p = np.mean(x >= 2)
    target = 0.5 * math.exp(-2)
    assert abs(p - target) <= 3 * math.sqrt(target * (1 - target) / x.size)


def test_gaussian_moments():
    x = draw(Gaussian(1.0), generator(2, "t"), 200_000)
    assert abs(x.mean()) <= 3 / math.sqrt(x.size)
    assert abs(x.var() - 1) <= 3 * math.sqrt(2 / x.size)


@pytest.mark.parametrize("tail", [StretchedExp(0.5, 2.0), StretchedExp(1.5, 1.0), Gaussian(2.0), BoundedSymmetric(1.0), BoundedSymmetric(2.0, "rademacher")])
def test_variance_closed_form(tail):
    x = draw(tail, generator(3, "v"), 400_000)
    se = math.sqrt((np.mean(x**4) - tail.variance**2) / x.size)
    assert abs(np.mean(x**2) - tail.variance) <= 3 * se


def test_bounded_range():
    x = draw(BoundedSymmetric(1.0), generator(4, "b"), 100_000)
    assert np.abs(x).max() <= 1.0
    r = draw(BoundedSymmetric(1.5, "rademacher"), generator(4, "b"), 1000)
    assert set(np.unique(r)) == {-1.5, 1.5}


@pytest.mark.parametrize("tail", [StretchedExp(0.7, 1.3), Gaussian(1.0), BoundedSymmetric(1.0)])
def test_symmetry_ks(tail):
    x = draw(tail, generator(5, "s"), 100_000)
    y = draw(tail, generator(6, "s"), 100_000)
    res = stats.ks_2samp(x, -y)
    crit = 1.628 * math.sqrt(2 / 100_000)  # 1% two-sample critical value
    assert res.statistic < crit


def test_tail_log_rate_examples():
    assert tail_log_rate(StretchedExp(2.0, 0.5), 10.0) == pytest.approx(-0.5 - math.log(2) / 100)
    assert tail_log_rate(Gaussian(1.0), 40.0) == pytest.approx(-0.5, abs=5e-3)
    assert tail_log_rate(Gaussian(1.0), 400.0) == pytest.approx(-0.5, abs=1e-4)
    assert tail_log_rate(BoundedSymmetric(1.0), 2.0) == -math.inf
    with pytest.raises(InvalidParameterError):
        tail_log_rate(Gaussian(1.0), 0.0)


def test_empirical_rate_matches_class():
    tail = StretchedExp(1.5, 0.8)
    x = draw(tail, generator(7, "r"), 2_000_000)
    for q in (0.99, 0.999):
        r = np.quantile(x, q)
        hits = np.sum(x >= r)
        assert hits >= 500
        emp = math.log(hits / x.size) / r**1.5
        assert emp == pytest.approx(tail.log_tail(r) / r**1.5, rel=0.05)


def test_tail_dict_round_trip():
    for tail in (StretchedExp(1.2, 0.4), Gaussian(3.0), BoundedSymmetric(2.0, "rademacher")):
        assert tail_from_dict(tail_to_dict(tail)) == tail
    with pytest.raises(InvalidParameterError):
        tail_from_dict({"variant": "cauchy"})


def test_nested_disorder_streams():
    small, big = make_box(2, 2), make_box(2, 5)
    tail = StretchedExp(1.0)
    a = sample_disorder(small, tail, 11)
    b = sample_disorder(big, tail, 11)
    np.testing.assert_array_equal(a.values.values, b.values.values[3:8, 3:8])
    c = sample_disorder(small, tail, 12)
    assert not np.array_equal(a.values.values, c.values.values)


@given(st.integers(0, 2**63 - 1))
@settings(max_examples=20, deadline=None)
def test_disorder_deterministic(seed):
    g = make_box(2, 2)
    a = sample_disorder(g, Gaussian(1.0), seed)
    b = sample_disorder(g, Gaussian(1.0), seed)
    assert np.array_equal(a.values.values, b.values.values)


def test_mean_field_examples():
    g = make_box(1, 5)
    plan = make_plan(g)
    m = mean_field(plan, fixed_disorder(g, ScalarField.delta(g, (0,))))
    np.testing.assert_allclose(m.flat, 6 - np.abs(np.arange(-5, 6)), atol=1e-12)
    assert np.all(mean_field(plan, fixed_disorder(g, np.zeros(11))).values == 0)
    g = make_box(2, 3)
    eta = sample_disorder(g, Gaussian(1.0), 3)
    m = mean_field(make_plan(g), eta)
    np.testing.assert_allclose(m.flat, dense_green(g) @ eta.values.flat, atol=1e-9)


def test_weighted_sum_regions():
    g = make_box(3, 4)
    acc = GreenAccessor(make_plan(g))
    eta = sample_disorder(g, StretchedExp(1.0), 8)
    for x in [(0, 0, 0), (2, -1, 3)]:
        full = weighted_sum(acc, x, "full", eta)
        near = weighted_sum(acc, x, "near", eta, L=2)
        far = weighted_sum(acc, x, "far", eta, L=2)
        assert near + far == pytest.approx(full, abs=1e-12)
    assert weighted_sum(acc, (0, 0, 0), "near", eta, L=4) == pytest.approx(weighted_sum(acc, (0, 0, 0), "full", eta))
    y0 = (3, 1, -4)
    spike = fixed_disorder(g, ScalarField.delta(g, y0))
    assert weighted_sum(acc, (0, 0, 0), "far", spike, L=1) == pytest.approx(acc((0, 0, 0), y0))
    with pytest.raises(OutOfBoxError):
        weighted_sum(acc, (5, 0, 0), "full", eta)
