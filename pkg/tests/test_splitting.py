import numpy as np
import pytest

from phcharts.errors import NumericalError
from phcharts.models import make_model
from phcharts.splitting import (SplittingFrame, compute_frame, load_segment,
                                lyapunov_exponents, orbit_segment, save_segment)

from oracles import L1, L2, L3, qr_lyapunov


@pytest.mark.parametrize("name", "ABC")
def test_frame_at_fixed_point_is_coordinate(name):
    fr = compute_frame(make_model(name), np.zeros(3))
    assert np.allclose(fr.lams, [L1, L2, L3], atol=1e-12)
    for e, axis in zip((fr.e1, fr.e2, fr.e3), np.eye(3)):
        assert abs(abs(np.dot(e, axis)) - 1) < 1e-12


@pytest.mark.parametrize("name", "BC")
def test_frame_invariance(name):
    m = make_model(name)
    x = np.array([0.2, 0.0, 0.0])
    fr, fx = compute_frame(m, x), compute_frame(m, m(x))
    J = m.jacobian(x)
    for e, en, lam in zip((fr.e1, fr.e2, fr.e3), (fx.e1, fx.e2, fx.e3), fr.lams):
        assert np.linalg.norm(J @ e - lam * en) < 1e-9


def test_b_frame_tilt_matches_block_eigenvector():
    # along the x1 axis, Df has the 2x2 block [[l2, eps x1], [0, l3]] on (x2, x3);
    # the stable direction of the orbit product is the bounded solution of the
    # slope recursion, i.e. x2 = -x1 x3 / 6 at this point
    m = make_model("B")
    x = np.array([0.2, 0.0, 0.0])
    fr = compute_frame(m, x)
    assert fr.e3[1] / fr.e3[2] == pytest.approx(-0.2 / 6, abs=1e-9)
    # unit-vector multiplier: l3 |(0, -2 x1 / 6, 1)| / |(0, -x1 / 6, 1)|
    lam3 = L3 * np.hypot(0.4 / 6, 1) / np.hypot(0.2 / 6, 1)
    assert np.allclose(fr.lams, [L1, L2, lam3], atol=1e-9)


def test_off_axis_orbit_leaving_box_is_reported():
    # the backward orbit of a point with x3 != 0 leaves the working box, so the
    # power iteration cannot settle; a diagnostic must be raised, not a bad frame
    with pytest.raises(NumericalError):
        compute_frame(make_model("B"), np.array([0.05, 0.02, 0.3]))


def test_frame_failure_reports_residual():
    with pytest.raises(NumericalError) as exc:
        compute_frame(make_model("C"), np.array([0.9, 0.0, 0.9]), n_power=3)
    assert "residual" in exc.value.info


def test_segment_exponents_against_qr():
    m = make_model("C")
    seg = orbit_segment(m, np.array([1e-6, 0.0, 0.0]), 10)
    chi, band = lyapunov_exponents(seg)
    ref = qr_lyapunov(m.jacobian, m, seg.points[0], seg.n_steps)
    assert np.allclose(np.sort(chi)[::-1], np.sort(ref)[::-1], atol=1e-6)
    assert np.allclose(chi, np.log([L1, L2, L3]), atol=1e-6)
    assert np.all(band < 1e-6)


def test_segment_cache_round_trip(tmp_path):
    m = make_model("B")
    seg = orbit_segment(m, np.array([1e-6, 0.0, 0.0]), 3)
    p = tmp_path / "orbit.jsonl"
    save_segment(seg, p)
    back = load_segment(p)
    assert back.model_key == m.key()
    assert np.array_equal(back.points, seg.points)
    assert np.array_equal(back.lams, seg.lams)


def test_frame_dict_round_trip():
    fr = compute_frame(make_model("B"), np.array([0.1, 0.0, 0.0]))
    back = SplittingFrame.from_dict(fr.to_dict())
    assert np.allclose(back.matrix, fr.matrix)
