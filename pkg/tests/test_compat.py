import math

import numpy as np
import pytest

from phcharts.charts import identity_chart, push_forward_chart
from phcharts.compat import (MirrorModel, build_joint_surface, compat_jets, cutoff,
                             tangency_order, transition_identity_error, whitney_cross_extend)
from phcharts.errors import ContractError, ValidationError
from phcharts.jets import Jet
from phcharts.nform import LeafParam, brush_leaf, stable_leaf

from oracles import L1, L2, L3


def _line(p, d):
    p, d = np.asarray(p, dtype=float), np.asarray(d, dtype=float)
    return LeafParam(p, 1, [Jet(np.array([p[i], d[i], 0.0]), 1, 2) for i in range(3)],
                     np.array(1.0))


def test_mirror_model_is_conjugate_inverse(models):
    m = models["C"]
    mm = MirrorModel(m)
    assert mm.multipliers == pytest.approx((1 / L3, 1 / L2, 1 / L1))
    x = np.random.default_rng(0).uniform(-0.3, 0.3, size=(20, 3))
    # mirror = P f^{-1} P with P swapping x1 and x3
    P = lambda v: v[..., ::-1]  # noqa: E731
    assert np.allclose(mm(x), P(m.inv(P(x))), atol=1e-15)
    assert np.allclose(mm.inv(mm(x)), x, atol=1e-14)


def test_model_a_identity_charts(models):
    ch = identity_chart(models["A"], 8)
    cj = compat_jets(ch, ch, 8)
    assert cj.empty and cj.compat_order == 9 and cj.minimal_index(1.0) == math.inf
    assert np.max(np.abs(cj.partials)) == 0
    S = build_joint_surface(ch, ch)
    g = np.linspace(-0.5, 0.5, 11)
    assert np.max(np.abs(S(g[:, None], g[None, :])[..., 1])) == 0


def test_model_b_level_one_charts(chart_b1, stable_b1):
    cj = compat_jets(stable_b1, chart_b1, 8)
    assert cj.empty and cj.levels == (1, 1)
    assert cj.axis_error <= 1e-12
    assert np.max(np.abs(cj.partials)) <= 1e-7
    assert transition_identity_error(stable_b1, chart_b1, 8) <= 1e-10


def test_model_b_joint_surface_is_the_invariant_graph(chart_b1, stable_b1):
    ext = whitney_cross_extend(compat_jets(stable_b1, chart_b1, 8), 3)
    S = build_joint_surface(stable_b1, chart_b1, ext)
    g = np.linspace(-S.rho, S.rho, 21)
    pts = S(g[:, None], g[None, :])
    assert np.max(np.abs(pts[..., 1] + pts[..., 0] * pts[..., 2] / 6)) <= 1e-7
    assert max(S.containment["W1"], S.containment["W3"]) <= 1e-8


def test_model_b_leaves_are_contained(models, chart_b1, stable_b1):
    m = models["B"]
    S = build_joint_surface(stable_b1, chart_b1)
    for leaf in (stable_leaf(m, np.array([0.2, 0.0, 0.0]), 10),
                 brush_leaf(m, 0.2, 10)):
        r = tangency_order(S, leaf)
        assert r.contained and r.label(8) == "order >= 8"


@pytest.mark.parametrize("theta", [0.3, 0.7, 1.2])
def test_transverse_line_against_plane(models, theta):
    S = build_joint_surface(identity_chart(models["A"], 6), identity_chart(models["A"], 6))
    leaf = _line([0.1, 0.0, 0.05], [math.cos(theta), math.sin(theta), 0.0])
    r = tangency_order(S, leaf)
    assert r.order == pytest.approx(1.0, abs=1e-6)
    assert r.C == pytest.approx(math.sin(theta), rel=1e-6)


def test_tangency_requires_base_on_surface(models):
    S = build_joint_surface(identity_chart(models["A"], 6), identity_chart(models["A"], 6))
    with pytest.raises(ValidationError):
        tangency_order(S, _line([0.0, 0.1, 0.0], [1.0, 0.0, 0.0]))


def test_model_c_index_set(charts0, stable_c0):
    cj = compat_jets(stable_c0, charts0["C"], 8)
    assert not cj.empty
    assert all(a > 0 and b > 0 for a, b in cj.index_set)
    assert cj.minimal_index(1.0) == min(a + b for a, b in cj.index_set)
    with pytest.raises(ValidationError, match="not order-"):
        whitney_cross_extend(cj, cj.compat_order)


def test_index_set_survives_push_forward(charts0, stable_c0):
    base = compat_jets(stable_c0, charts0["C"], 8)
    D = [L1, L2, L3]
    pushed = compat_jets(push_forward_chart(stable_c0, D), push_forward_chart(charts0["C"], D), 8)
    assert pushed.index_set == base.index_set


def test_compat_order_exceeds_chart_order(models):
    ch = identity_chart(models["A"], 4)
    with pytest.raises(ContractError):
        compat_jets(ch, ch, 6)


def test_whitney_zero_data():
    ext = whitney_cross_extend(np.zeros((5, 5)), 2)
    g = np.linspace(-0.5, 0.5, 9)
    assert np.max(np.abs(ext(g[:, None], g[None, :]))) == 0


def test_whitney_polynomial_data_extends_by_itself():
    H = np.zeros((7, 7))
    H[2, 2] = 1.0
    ext = whitney_cross_extend(H, 3, rho=0.5)
    g = np.linspace(-0.2, 0.2, 9)  # inside the region where the cutoff is 1
    T1, T3 = np.meshgrid(g, g, indexing="ij")
    assert np.max(np.abs(ext(T1, T3) - T1 ** 2 * T3 ** 2)) < 1e-15
    # cross jets d1^i d3^j at t1 = 0 match those of t1^2 t3^2
    t3 = np.linspace(-0.5, 0.5, 11)
    for i in range(4):
        for j in range(4 - i):
            ref = (2.0 if i == 2 else 0.0) * (np.polynomial.polynomial.polyval(
                t3, np.polynomial.polynomial.polyder([0, 0, 1.0], j)))
            assert np.allclose(ext.inner(0 * t3, t3, i, j), ref, atol=1e-14)
    assert ext.checks["jet_match"] < 1e-12


def test_whitney_refuses_low_order_data():
    H = np.zeros((4, 4))
    H[1, 1] = 0.3
    with pytest.raises(ValidationError, match="not order-3 flat"):
        whitney_cross_extend(H, 2)


def test_cutoff_shape():
    x = np.linspace(-2, 2, 401)
    c = cutoff(x)
    assert np.all(c[np.abs(x) <= 0.5] == 1) and np.all(c[np.abs(x) >= 1] == 0)
    assert np.all(np.diff(c[x >= 0]) <= 0)
