import itertools

import numpy as np
import pytest

from phcharts.approx import (RationalFn, near_rational_measure, poly_distance,
                             rational_bounds_constants, rational_distance, rescaled_constants,
                             spread_check)
from phcharts.models import make_model
from phcharts.templates import series_template

from oracles import brute_spread, levelled_line_error, lp_minimax


def test_spread_examples():
    E = [-0.8, -0.4, 0.0, 0.4, 0.8]
    # removing a single point is free with degenerate intervals; with an atom
    # of half-width 0.025 each removal costs 0.05 and two removals exceed eta
    assert not spread_check(E, 3, 0.3, 0.1).spread
    r = spread_check(E, 3, 0.3, 0.1, atom=0.025)
    assert r.spread and len(r.witness) == 4
    assert not spread_check(np.linspace(0, 0.05, 5), 1, 0.01, 0.1).spread
    assert not spread_check([0.0], 1, 0.1, 0.1).spread
    assert not spread_check([0.0], 3, 0.1, 0.1).spread


def test_spread_witness_and_intervals_are_valid():
    E = [-0.8, -0.4, 0.0, 0.4, 0.8]
    bad = spread_check(E, 3, 0.3, 0.1)
    assert len(bad.intervals) <= 4
    assert sum(b - a for a, b in bad.intervals) < 0.1
    good = spread_check(E, 3, 0.3, 0.1, atom=0.025)
    w = sorted(good.witness)
    assert all(b - a > 0.3 for a, b in zip(w, w[1:]))


def test_spread_matches_brute_force_random():
    rng = np.random.default_rng(1)
    for _ in range(200):
        n = int(rng.integers(1, 10))
        xs = list(np.round(rng.uniform(-1, 1, n), 3))
        k = int(rng.integers(1, 4))
        sigma, eta = rng.uniform(0.05, 0.5), rng.uniform(0.05, 0.6)
        atom = float(rng.choice([0.0, 0.01, 0.03]))
        assert spread_check(xs, k, sigma, eta, atom).spread == brute_spread(xs, k, sigma, eta, atom)


def test_poly_distance_examples():
    t = np.linspace(-1, 1, 21)
    d, c = poly_distance(t, t ** 2, 2)
    assert d <= 1e-12 and np.allclose(c, [0, 0, 1], atol=1e-12)
    t = np.linspace(-1, 1, 41)
    d, c = poly_distance(t, np.abs(t), 1)
    assert d == pytest.approx(levelled_line_error(t, np.abs(t)), abs=1e-12)


def test_poly_distance_matches_lp():
    rng = np.random.default_rng(2)
    for _ in range(30):
        t = np.sort(rng.uniform(-1, 1, 30))
        v = rng.normal(size=30)
        d = int(rng.integers(0, 6))
        assert poly_distance(t, v, d)[0] == pytest.approx(lp_minimax(t, v, d), rel=1e-7, abs=1e-9)


def test_poly_distance_model_c_template():
    m = make_model("C")
    t = np.linspace(-1, 1, 64)
    T = series_template(m, t)
    d3 = poly_distance(t, T, 3)[0]
    assert d3 > 1e-3
    assert d3 == pytest.approx(lp_minimax(t, T, 3), rel=1e-6)
    # a higher degree cross-check can only decrease the distance
    assert poly_distance(t, T, 6)[0] <= d3


def test_poly_distance_too_few_points():
    with pytest.raises(ValueError):
        poly_distance([0.0, 1.0], [0.0, 1.0], 2)


def test_rational_distance_examples():
    t = np.linspace(-1, 1, 41)
    d, R = rational_distance(t, 1 / (1 + t ** 2), 2)
    assert d <= 1e-8
    d, R = rational_distance(t, t, 1)
    assert d <= 1e-12
    assert R.denominator_margin() > 0


def test_rational_distance_is_an_upper_bound_below_poly():
    m = make_model("C")
    t = np.linspace(-0.5, 0.5, 64)
    T = series_template(m, t)
    dr, R = rational_distance(t, T, 3)
    assert 0 < dr <= poly_distance(t, T, 3)[0] + 1e-15
    assert np.max(np.abs(R(t) - T)) == pytest.approx(dr, rel=1e-9)


def test_rational_bounds_line():
    b = rational_bounds_constants(np.linspace(-1, 1, 9), RationalFn(np.array([0.0, 1.0]),
                                                                    np.array([1.0])), 0.1)
    assert b.I == [] and b.C_deriv == pytest.approx(1.0)
    # the root of R(t) = t is in the band, so the J-family is one interval around 0
    assert len(b.J) == 1 and b.J[0][0] < 0 < b.J[0][1]
    assert b.C_value == pytest.approx(1 / 0.025)


def test_rational_bounds_dense_grid_oracles():
    E = np.linspace(-1, 1, 9)
    g = np.linspace(-1, 1, 200001)
    R = RationalFn(np.array([1.0]), np.array([0.01, 0, 1.0]))
    b = rational_bounds_constants(E, R, 0.1)
    assert len(b.I) == 1 and b.I[0][0] < 0 < b.I[0][1]
    out = (g < b.I[0][0]) | (g > b.I[0][1])
    assert np.max(np.abs(R.derivative(g[out]) / b.A)) <= b.C_deriv
    assert np.max(np.abs(R.derivative(g[out]) / b.A)) == pytest.approx(b.C_deriv, rel=1e-6)
    R = RationalFn(np.array([-0.5, 1.0]), np.array([2.0, 1.0]))
    b = rational_bounds_constants(E, R, 0.1)
    assert b.I == [] and len(b.J) == 1 and b.J[0][0] < 0.5 < b.J[0][1]
    out = (g < b.J[0][0]) | (g > b.J[0][1])
    mn = np.min(np.abs(R(g[out]) / b.A))
    assert 1 / b.C_value <= mn
    assert 1 / b.C_value == pytest.approx(mn, rel=1e-6)


def test_rescaled_constants():
    assert rescaled_constants(1.0, 40.0, 2.0, 0.0, 0.5) == (8.0, 0.05)


def test_near_rational_measure():
    g = np.linspace(-1, 1, 257)
    one = lambda t: np.ones_like(t)  # noqa: E731
    zero = lambda t: np.zeros_like(t)  # noqa: E731
    assert near_rational_measure(g, g ** 2, one, lambda t: t ** 2, 1e-3) == 1.0
    frac = near_rational_measure(g, -g / 6, one, zero, 0.05)
    assert frac == pytest.approx(np.mean(np.abs(g) / 6 <= 0.05))
    assert frac == pytest.approx(0.30, abs=0.01)
    m = make_model("C")
    T = series_template(m, g)
    d, c = poly_distance(g, T, 3)
    assert near_rational_measure(g, T, one, lambda t: np.polyval(c[::-1], t), d / 2) < 1


def test_near_rational_positivity_margin():
    g = np.linspace(-1, 1, 11)
    with pytest.raises(ValueError):
        near_rational_measure(g, g, lambda t: t, lambda t: t, 0.1, margin=0.0)


def test_all_subsets_small_set_against_brute_force():
    base = np.array([-0.9, -0.6, -0.35, -0.1, 0.05, 0.3, 0.62, 0.9])
    for r in range(1, len(base) + 1):
        for sub in itertools.combinations(base, r):
            assert spread_check(sub, 2, 0.2, 0.3).spread == brute_spread(list(sub), 2, 0.2, 0.3)
