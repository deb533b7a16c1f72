import math

import numpy as np
import pytest

from phcharts import jets
from phcharts.charts import (Cocycle2, choose_d0, constant_diagonal, elljet_cocycle,
                             identity_chart, improve_chart, poly_fn, polynomial_tail,
                             polynomialize_offdiagonal, push_forward_chart, triangularize,
                             verify_level)
from phcharts.errors import ContractError, NumericalError
from phcharts.jets import Jet
from phcharts.templates import extract_template

from oracles import L1, L2, L3


def _const(v):
    return poly_fn([v])


def test_triangularize_synthetic():
    tc = Cocycle2(_const(1.2), _const(0.0), poly_fn([0, 0.05]), _const(0.3), 2.0)
    out = triangularize(tc)
    g = np.linspace(-0.5, 0.5, 41)
    assert out.lower_left_max(g) <= 1e-9
    # invariant line (1, p(t)): p(2t) = (0.05 t + 0.3 p(t)) / 1.2, matched by powers of t
    c1 = 0.05 / (1.2 * 2 - 0.3)
    p = out.basis[0][1][0](Jet.variable(0, 1, 4)).coeffs
    assert np.allclose(p, [0, c1, 0, 0, 0], atol=1e-14)


def test_triangularize_already_triangular():
    tc = Cocycle2(_const(L2), poly_fn([0, 0.1]), _const(0.0), _const(L3), L1)
    out = triangularize(tc)
    g = np.linspace(-0.5, 0.5, 41)
    assert np.allclose(out.matrix(g), tc.matrix(g), atol=1e-14)


def test_constant_diagonal_exp():
    tc = Cocycle2(lambda t: 1.2 * jets.exp(t) if isinstance(t, Jet) else 1.2 * np.exp(t),
                  _const(0.0), _const(0.0), _const(0.3), 2.0)
    g = np.linspace(-0.5, 0.5, 41)
    out = constant_diagonal(tc, g)
    assert np.max(np.abs(out.c(g) - g)) < 1e-10
    assert np.max(np.abs(out.a(g) - 1.2)) < 1e-10


def test_constant_diagonal_noop():
    g = np.linspace(-0.5, 0.5, 41)
    tc = Cocycle2(_const(L2), poly_fn([0, 0.1]), _const(0.0), _const(L3), L1)
    out = constant_diagonal(tc, g)
    assert np.max(np.abs(out.c(g))) < 1e-10


def test_choose_d0():
    assert choose_d0(1.2, 0.3, math.log(2)) == 3


def test_polynomialize_sin():
    alpha, beta, lam = 1.2, 0.3, 2.0
    tc = Cocycle2(_const(alpha), lambda t: jets.sin(t) if isinstance(t, Jet) else np.sin(t),
                  _const(0.0), _const(beta), lam)
    out = polynomialize_offdiagonal(tc)
    assert out.d0 == 3
    assert np.allclose(out.r(np.array([1.0, 2.0])), [1 - 1 / 6, 2 - 8 / 6])
    t = np.linspace(-0.5, 0.5, 20)

    def rhat(s):
        # sin s - s + s^3/6 by its series, avoiding cancellation at small s
        return sum((-1) ** ((k - 1) // 2) * s ** k / math.factorial(k) for k in range(5, 40, 2))

    u_ref = sum(alpha ** (j - 1) / beta ** j * rhat(t / lam ** j) for j in range(1, 80))
    assert np.max(np.abs(out.u(t) - u_ref)) < 1e-12
    # sheared off-diagonal equals the cubic head
    resid = np.sin(t) + alpha * out.u(t) - beta * out.u(lam * t) - out.r(t)
    assert np.max(np.abs(resid)) < 1e-8


def test_polynomialize_polynomial_input_is_noop():
    tc = Cocycle2(_const(1.2), poly_fn([0, 0.1, 0, 0.02]), _const(0.0), _const(0.3), 2.0)
    out = polynomialize_offdiagonal(tc)
    assert np.max(np.abs(out.u(np.linspace(-1, 1, 11)))) == 0


def test_polynomialize_needs_constant_diagonal():
    tc = Cocycle2(poly_fn([1.2, 0.1]), _const(0.0), _const(0.0), _const(0.3), 2.0)
    with pytest.raises(ContractError):
        polynomialize_offdiagonal(tc)


def test_polynomialize_divergent_series():
    tc = Cocycle2(_const(1.2), _const(0.0), _const(0.0), _const(0.3), 2.0)
    with pytest.raises(NumericalError, match="divergent"):
        polynomialize_offdiagonal(tc, d0=0)


def test_polynomial_tail():
    t = np.linspace(-1, 1, 41)
    assert polynomial_tail(1 + t ** 3, t, 3)[0]
    assert not polynomial_tail(np.sin(3 * t), t, 3)[0]


def test_identity_chart_levels(models, grid):
    verify_level(identity_chart(models["A"], 10), 0, grid)
    res = verify_level(identity_chart(models["B"], 10), 0, grid)
    assert res["poly_tail"] < 1e-12
    with pytest.raises(NumericalError):
        verify_level(identity_chart(models["C"], 10), 0, grid)


def test_b_axis_derivative(models, grid):
    F = identity_chart(models["B"], 6).F_at(grid, 2)
    assert np.allclose(F[1].coeff((0, 0, 1)), 0.1 * grid, atol=1e-15)


def test_c_chart_is_zero_good(charts0, grid):
    ch = charts0["C"]
    res = verify_level(ch, 0, grid)
    assert res["poly_tail"] <= 1e-8 and res["d0"] == 3
    assert max(v for k, v in ch.check_axes(grid).items()) <= 1e-8


def test_c_chart_pointwise_against_finite_differences(charts0):
    # F = iota^{-1} o f o iota evaluated pointwise, differentiated in x3 numerically
    ch = charts0["C"]
    m = ch.model
    h = 1e-5
    for t in (-0.3, 0.1, 0.4):
        vals = []
        for s in (-h, h):
            y = m(ch(np.array([t, 0.0, s])))
            vals.append(ch.inverse_point(y))
        fd = (vals[1][1] - vals[0][1]) / (2 * h)
        jet = ch.F_at(np.array([t]), 1)[1].coeff((0, 0, 1))[0]
        assert fd == pytest.approx(jet, abs=1e-6)


def test_elljet_cocycle(models, chart_b1, grid):
    tcA = elljet_cocycle(identity_chart(models["A"], 8), 1, grid)
    assert np.max(np.abs(tcA.r(grid))) == 0
    tcB = elljet_cocycle(chart_b1, 1, grid)
    assert np.max(np.abs(tcB.r(grid))) < 1e-12
    assert tcB.alpha == pytest.approx(L2) and tcB.beta == pytest.approx(L3 ** 2)


def test_elljet_requires_lower_goodness(models, grid):
    with pytest.raises(NumericalError, match="good"):
        elljet_cocycle(identity_chart(models["B"], 8), 1, grid)


def test_improve_b_flattens_template(chart_b1, grid):
    assert chart_b1.level == 1
    T1 = extract_template(chart_b1, 1, grid)
    assert np.max(np.abs(T1.values)) < 1e-7


def test_improve_with_zero_template_keeps_chart(models, grid):
    ch = identity_chart(models["A"], 8)
    ch.level = 0  # MODEL-A's identity chart is 0-good
    T = extract_template(ch, 0, grid)
    from phcharts.templates import classify_template
    classify_template(T, 3, probe=False)
    new = improve_chart(ch, T, grid)
    assert new.level == 1
    for a, b in zip(new.iota, ch.iota):
        assert np.array_equal(a.coeffs, b.coeffs)


def test_improve_refuses_non_polynomial(charts0, grid):
    T = extract_template(charts0["C"], 0, grid)
    from phcharts.templates import classify_template
    classify_template(T, 3, probe=False)
    with pytest.raises(ContractError):
        improve_chart(charts0["C"], T, grid)


def test_push_forward_linear_model(models):
    ch = identity_chart(models["A"], 6)
    pf = push_forward_chart(ch, [L1, L2, L3])
    for a, b in zip(pf.iota, ch.iota):
        assert np.allclose(a.coeffs, b.coeffs)
    with pytest.raises(ContractError):
        push_forward_chart(ch, [1.0, 0.0, 1.0])
