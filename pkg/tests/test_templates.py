import math

import numpy as np
import pytest

from phcharts.charts import identity_chart
from phcharts.templates import (classify_template, degree_bound, extract_template,
                                law_coefficients, series_template, template_law_residual,
                                template_pullback)

from oracles import L1, L2, L3, template_series


def _zero_good_identity(model):
    ch = identity_chart(model, 10)
    ch.level = 0
    return ch


def test_model_a_template_vanishes(models, grid):
    T = extract_template(_zero_good_identity(models["A"]), 0, grid)
    assert np.max(np.abs(T.values)) == 0
    assert template_law_residual(T, _zero_good_identity(models["A"]), 0) < 1e-15
    v = classify_template(T, 2)
    assert v.polynomial and v.residual == 0


def test_model_b_template_is_linear(models, grid):
    ch = _zero_good_identity(models["B"])
    T = extract_template(ch, 0, grid)
    assert np.max(np.abs(T.values + grid / 6)) <= 1e-8
    assert template_law_residual(T, ch, 0) <= 1e-9
    assert T.reconstruction <= 1e-7
    v = classify_template(T, 1)
    assert v.verdict == "polynomial(1)" and v.residual <= 1e-8
    assert v.coeffs[1] == pytest.approx(-1 / 6, abs=1e-10)


def test_model_b_fixed_point_identity():
    c = -1 / 6
    assert c * L1 == pytest.approx(c * L2 / L3 + 0.1 / L3, abs=1e-14)


def test_model_c_template_matches_series(models, charts0, grid):
    ch = _zero_good_identity(models["C"])
    T = extract_template(ch, 0, grid)
    assert np.max(np.abs(T.values - template_series(grid))) <= 1e-6
    assert template_law_residual(T, ch, 0) <= 1e-6
    assert np.max(np.abs(series_template(models["C"], grid) - template_series(grid))) < 1e-14
    # template of the polynomialised chart: the shear u shifts T by -u
    Tc = extract_template(charts0["C"], 0, grid)
    u = charts0["C"].cocycle.u(grid)
    assert np.max(np.abs(Tc.values - (template_series(grid) - u))) < 1e-9
    assert template_law_residual(Tc, charts0["C"], 0) <= 1e-9


def test_coefficient_bounds_hold(models, grid):
    T = extract_template(_zero_good_identity(models["C"]), 0, grid)
    assert np.all(np.abs(T.a) <= T.bound + 1e-15)
    assert np.all(np.abs(T.b) <= T.bound + 1e-15)


def test_pullback_zero_steps(models, grid):
    ch = _zero_good_identity(models["B"])
    T = extract_template(ch, 0, grid)
    A, P = law_coefficients(ch, 0)
    pb = template_pullback(T, 0, A, P, L1)
    assert np.all(pb.Q_coeffs == 0) and np.array_equal(pb.rescaled, T.values)


def test_pullback_model_b(models, grid):
    ch = _zero_good_identity(models["B"])
    T = extract_template(ch, 0, grid)
    A, P = law_coefficients(ch, 0)
    assert A == pytest.approx(L2 / L3)
    pb = template_pullback(T, 4, A, P, L1)
    assert pb.residual <= 1e-9
    assert np.allclose(pb.Q_coeffs[2:], 0)
    # by hand: T = -t/6 so A^4 T(t/16) = -(4^4/16) t / 6, and Q = T - that
    assert pb.Q_coeffs[1] == pytest.approx(-1 / 6 + 16 / 6, abs=1e-12)


def test_pullback_stepwise_equals_n_step(models, charts0, grid):
    ch = charts0["C"]
    T = extract_template(ch, 0, grid)
    A, P = law_coefficients(ch, 0)
    n = 5
    pb = template_pullback(T, n, A, P, L1)
    # climb one step at a time: T(t/l1^{j-1}) = A T(t/l1^j) + P(t/l1^j)
    v = T(grid / L1 ** n)
    for j in range(n, 0, -1):
        s = grid / L1 ** j
        v = A * v + np.polyval(np.asarray(P)[::-1], s)
    assert np.max(np.abs(v - (pb.rescaled + pb.Q_values))) <= 1e-8
    assert pb.residual <= 1e-8


def test_degree_bound_defaults():
    d, x = degree_bound(math.log(2), math.log(1.2), math.log(0.3), 0, 0.01)
    ref = (math.log(1.2) - math.log(0.3) + 2 * 0.01) / (math.log(2) - 0.01)
    assert x == pytest.approx(ref) and d == 3


def test_model_c_is_not_polynomial(models, grid):
    T = extract_template(_zero_good_identity(models["C"]), 0, grid)
    for d in range(1, 7):
        assert not classify_template(T, d, probe=False).polynomial
    v = classify_template(T, 3)
    assert v.probe["second_order"]["growth"] == "logarithmic"


def test_classify_degenerate_grid(models):
    T = extract_template(_zero_good_identity(models["B"]), 0, np.array([0.1, 0.2]))
    with pytest.raises(ValueError, match="distinct points"):
        classify_template(T, 3, probe=False)
