import math

import numpy as np
import pytest

from phcharts import jets
from phcharts.errors import ContractError
from phcharts.jets import Jet, Jet1, jet_compose, jet_eval, jet_inverse
from phcharts.models import make_model, model_eval

from oracles import closed_form, fd_jacobian, sin_taylor


def test_compose_binomial():
    outer = Jet1([0.0, 0.0, 1.0])
    inner = Jet.variable(0, 1, 2, 1.0)
    assert np.allclose(jet_compose(outer, [inner]).coeffs, [1, 2, 1])


def test_compose_identity():
    rng = np.random.default_rng(0)
    j = Jet(rng.normal(size=jets.n_monomials(2, 4)), 2, 4)
    ident = Jet1([0.0, 1.0, 0.0, 0.0, 0.0])
    assert np.allclose(jet_compose(ident, [j]).coeffs, j.coeffs)


def test_compose_sin_of_2t():
    t = Jet.variable(0, 1, 5)
    s = jets.sin(t * 2.0)
    assert np.allclose(s.coeffs, [0, 2, 0, -4 / 3, 0, 4 / 15], atol=1e-15)
    assert np.allclose(s.coeffs, sin_taylor(2.0, 5), atol=1e-15)
    # the same through composition with the sin series as an outer polynomial
    outer = Jet1(sin_taylor(1.0, 5))
    assert np.allclose(jet_compose(outer, [t * 2.0]).coeffs, sin_taylor(2.0, 5), atol=1e-15)


def test_eval_examples():
    assert jet_eval(Jet1([1.0, 2.0, 1.0]), 1.0) == pytest.approx(4.0)
    assert jet_eval(Jet1([0, 0, 0, 1.0]), 0.5) == pytest.approx(0.125)
    e = jets.exp(Jet.variable(0, 1, 8))
    assert abs(jet_eval(e, 0.1) - math.exp(0.1)) < 1e-12


def test_truncated_product_is_exact():
    rng = np.random.default_rng(1)
    K = 4
    a = Jet(rng.normal(size=jets.n_monomials(2, K)), 2, K)
    b = Jet(rng.normal(size=jets.n_monomials(2, K)), 2, K)
    x = rng.uniform(-0.3, 0.3, size=(30, 2))
    # polynomial product evaluated exactly, then truncated by dropping degrees > K
    full = 0.0
    exps = a.exponents
    for i, ea in enumerate(exps):
        for j, eb in enumerate(exps):
            e = ea + eb
            if e.sum() <= K:
                full = full + a.coeffs[i] * b.coeffs[j] * np.prod(x ** e, axis=1)
    assert np.allclose(jet_eval(a * b, x), full, atol=1e-13)


def test_ring_laws():
    rng = np.random.default_rng(2)
    mk = lambda: Jet(rng.normal(size=jets.n_monomials(3, 3)), 3, 3)  # noqa: E731
    a, b, c = mk(), mk(), mk()
    assert np.allclose(((a + b) + c).coeffs, (a + (b + c)).coeffs)
    assert np.allclose((a * (b + c)).coeffs, (a * b + a * c).coeffs)


def test_chain_rule():
    t = Jet.variable(0, 1, 6)
    g = t * 0.7 + t * t * 0.2
    f_of_g = jets.sin(g)
    lhs = f_of_g.deriv(0)
    rhs = jets.cos(g) * g.deriv(0)
    # the derivative of an order-K jet is only meaningful through degree K-1
    assert np.allclose(lhs.coeffs[:6], rhs.coeffs[:6], atol=1e-14)


def test_arity_mismatch_raises():
    with pytest.raises(ContractError):
        jet_compose(Jet.variable(0, 2, 3), [Jet.variable(0, 1, 3)])
    with pytest.raises(ContractError):
        jet_compose(Jet.variable(0, 2, 3), [Jet.variable(0, 1, 3), Jet.variable(0, 1, 2)])
    with pytest.raises(ContractError):
        Jet(np.zeros(5), 2, 2)


@pytest.mark.parametrize("name", "ABC")
def test_model_jets_match_finite_differences(name):
    m = make_model(name)
    rng = np.random.default_rng(3)
    for x in rng.uniform(-0.8, 0.8, size=(20, 3)):
        J = model_eval(m, x, 3)
        lin = np.stack([c.linear() for c in J])
        fd = fd_jacobian(lambda y: closed_form(name, y), x)
        assert np.allclose(lin, fd, atol=1e-6)


def test_inverse_round_trip():
    F = model_eval(make_model("C"), np.zeros(3), 5)
    G = jet_inverse(F)
    comp = [jet_compose(f - f.const, G) for f in F]
    for i, c in enumerate(comp):
        assert np.allclose(c.coeffs, Jet.variable(i, 3, 5).coeffs, atol=1e-12)


def test_serialization_round_trip():
    j = Jet(np.arange(jets.n_monomials(2, 3), dtype=float), 2, 3)
    k = Jet.from_dict(j.to_dict())
    assert k.nvars == 2 and k.order == 3 and np.array_equal(k.coeffs, j.coeffs)
