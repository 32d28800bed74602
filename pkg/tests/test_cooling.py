import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from omcavity import cooling as C
from omcavity import model as M
from omcavity.errors import ValidationError

DEV = M.EIGHT_SHIELD
LAW = M.HotBathModel.eight_shield()
GRID = np.geomspace(1.0, 1000.0, 31)


def test_beta_zero_below_beta_fit():
    s0 = C.cooling_curve(DEV, LAW, C.SweepSpec(GRID, beta=0.0))
    s1 = C.cooling_curve(DEV, LAW, C.SweepSpec(GRID, beta=M.BETA_FIT))
    assert all(a.n_avg <= b.n_avg for a, b in zip(s0, s1))


def test_eight_shield_n100():
    (r,) = C.cooling_curve(DEV, LAW, C.SweepSpec([100.0], beta=0.0))
    assert r.n_avg == pytest.approx(0.16346035813169835, rel=1e-9)
    assert r.n_avg == pytest.approx(0.16, abs=0.01)


def test_curve_matches_model_composition():
    res = C.cooling_curve(DEV, LAW, C.SweepSpec(GRID, beta=M.BETA_FIT))
    law = LAW.with_beta(M.BETA_FIT)
    for r, nc in zip(res, GRID):
        p = M.input_power_for_photons(DEV.cavity, DEV.mode.omega_m, nc)
        assert r.p_in == pytest.approx(p, rel=1e-15)
        assert r.n_wg == pytest.approx(M.BETA_FIT * p, rel=1e-15)
        b = M.hot_bath(law, nc, p, mode=DEV.mode)
        assert r.n_p == b.n_p and r.gamma_p == b.gamma_p


@pytest.mark.parametrize("beta", [0.0, M.BETA_FIT])
def test_rate_balance_identity(beta):
    for r in C.cooling_curve(DEV, LAW, C.SweepSpec(GRID, beta=beta)):
        lhs = r.n_avg * (DEV.mode.gamma_0 + r.gamma_om + r.gamma_p)
        rhs = r.gamma_p * r.n_p + DEV.mode.gamma_0 * LAW.n_0
        assert lhs == pytest.approx(rhs, rel=1e-12)


def test_beta_channel_only_through_power():
    # a beta change is equivalent to an explicit n_wg = beta P_in shift of x
    r = C.cooling_curve(DEV, LAW, C.SweepSpec([50.0], beta=M.BETA_FIT))[0]
    x = 50.0 + M.BETA_FIT * r.p_in
    assert r.n_p == pytest.approx(LAW.occupancy(x), rel=1e-15)


def test_ceff_crossing():
    cc = C.ceff_curve(DEV, LAW, C.SweepSpec(GRID, beta=M.BETA_FIT))
    c100 = C.cooling_curve(DEV, LAW, C.SweepSpec([100.0, 1000.0], beta=M.BETA_FIT))
    assert c100[0].c_eff < 1 < c100[1].c_eff
    assert 100 < cc.crossing < 1000
    assert cc.first_above >= cc.crossing
    r = C.cooling_point(DEV, LAW.with_beta(M.BETA_FIT), cc.crossing)
    assert r.c_eff == pytest.approx(1.0, abs=1e-9)
    assert 1.0 <= cc.peak <= 2.6


def test_ceff_zero_without_coupling():
    mode = M.MechanicalMode.from_hz(10.02e9, 8.28, 14.54e3, 0.0)
    cc = C.ceff_curve(M.Device(DEV.cavity, mode), LAW, C.SweepSpec(GRID))
    assert np.all(cc.c_eff == 0.0) and math.isnan(cc.crossing)


@settings(max_examples=30, deadline=None)
@given(nc=st.floats(0.1, 1e4), k=st.floats(0.1, 10.0))
def test_ceff_linear_in_gamma_om(nc, k):
    bath = M.hot_bath(LAW, nc, 0.0, mode=DEV.mode)
    g = float(M.parametric_rate(DEV.mode, DEV.cavity, nc))
    a, b = M.cooled_occupancy(bath, g), M.cooled_occupancy(bath, k * g)
    assert b.c_eff == pytest.approx(k * a.c_eff, rel=1e-12)


def test_sweep_validation():
    for bad in ([1.0, 1.0], [2.0, 1.0], [0.0, 1.0], [], [1.0, math.nan]):
        with pytest.raises(ValidationError):
            C.SweepSpec(bad)
    with pytest.raises(ValidationError):
        C.SweepSpec([1.0], beta=-1.0)


def test_threads_do_not_change_output():
    s = C.SweepSpec(GRID, beta=M.BETA_FIT)
    assert C.write_curve(None, C.cooling_curve(DEV, LAW, s)) == C.write_curve(
        None, C.cooling_curve(DEV, LAW, s, threads=4))


# -- map --------------------------------------------------------------------


@pytest.fixture(scope="module")
def cmap():
    return C.ceff_map(DEV, LAW, np.geomspace(0.1, 1e4, 31), np.geomspace(1e5, 1e7, 21))


def test_high_q_anchor():
    m = C.ceff_map(DEV, LAW, [1.0], [3.9e5])
    assert m.n_avg[0, 0] == pytest.approx(0.10, abs=0.02)
    assert m.c_eff[0, 0] == pytest.approx(4.9, abs=0.5)


def test_map_monotone_in_q(cmap):
    assert np.all(np.diff(cmap.c_eff, axis=0) > 0)


def test_map_equals_pointwise(cmap):
    i, j = 7, 12
    r = C.cooling_point(DEV.with_q(cmap.q_c[i]), LAW, cmap.n_c[j])
    assert cmap.c_eff[i, j] == r.c_eff and cmap.n_avg[i, j] == r.n_avg
    bath = M.hot_bath(LAW, cmap.n_c[j], 0.0, mode=DEV.mode)
    cav = DEV.cavity.with_q(cmap.q_c[i])
    assert cav.eta_kappa == pytest.approx(DEV.cavity.eta_kappa, rel=1e-15)
    g = float(M.parametric_rate(DEV.mode, cav, cmap.n_c[j]))
    assert M.cooled_occupancy(bath, g).c_eff == pytest.approx(r.c_eff, rel=1e-15)


def test_contours_feed_back(cmap):
    n_pts = 0
    for lv, lines in cmap.contours.items():
        for seg in lines:
            for x, q in seg:
                v = C.cooling_point(DEV.with_q(q), LAW, x).c_eff
                assert v == pytest.approx(lv, rel=0.02)
                n_pts += 1
    assert n_pts > 20
    assert len(cmap.contours[1.0]) >= 1


def test_map_csv_roundtrip(tmp_path, cmap):
    p = tmp_path / "map.csv"
    C.write_map(p, cmap, comments=["x"])
    qc, nc, n_avg, c_eff = C.read_map(p)
    assert np.array_equal(qc, cmap.q_c) and np.array_equal(nc, cmap.n_c)
    assert np.array_equal(c_eff, cmap.c_eff) and np.array_equal(n_avg, cmap.n_avg)
    text = C.write_contours(None, cmap)
    assert text.startswith("level,line,n_c,q_c\n")


def test_curve_csv_roundtrip(tmp_path):
    res = C.cooling_curve(DEV, LAW, C.SweepSpec(GRID, beta=M.BETA_FIT))
    p = tmp_path / "curve.csv"
    C.write_curve(p, res)
    d = C.read_curve(p)
    assert list(d) == list(C.CURVE_COLUMNS)
    assert np.array_equal(d["c_eff"], [r.c_eff for r in res])
    assert np.array_equal(d["gamma_om_hz"], [r.gamma_om / M.TWO_PI for r in res])
