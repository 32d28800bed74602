import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from omcavity import bath
from omcavity.bath import (
    ConductanceModel,
    absorbed_power,
    bath_temperature_from_power,
    fit_piecewise_linewidth,
    fit_power_law,
    occupancy_ratio_1d_2d,
)
from omcavity.errors import FitError, ValidationError
from omcavity.model import TWO_PI, HotBathModel

# 2 * 42**(1/3.3), evaluated independently
RATIO_1D_2D = 6.20759993668359


# -- fit_power_law ----------------------------------------------------------


def test_pure_power_law_exact():
    x = np.logspace(0, 4, 20)
    f = fit_power_law(x, 1.1 * x**0.3)
    assert f.amplitude == pytest.approx(1.1, rel=1e-6)
    assert f.exponent == pytest.approx(0.3, rel=1e-6)
    assert f.offset == 0.0 and not f.with_offset


def test_offset_power_law_exact():
    x = np.logspace(-1, 3, 30)
    y = 23.91e3 + 9.01e3 * x**0.29
    f = fit_power_law(x, y, with_offset=True)
    assert f.offset == pytest.approx(23.91e3, rel=1e-6)
    assert f.amplitude == pytest.approx(9.01e3, rel=1e-6)
    assert f.exponent == pytest.approx(0.29, rel=1e-6)
    assert f.covariance.shape == (3, 3)
    assert f(x) == pytest.approx(y, rel=1e-9)


@settings(max_examples=40, deadline=None)
@given(s=st.floats(1e-3, 1e3), p=st.floats(0.1, 1.5), a=st.floats(0.1, 100.0))
def test_scale_covariance(s, p, a):
    x = np.logspace(0, 3, 15)
    y = a * x**p
    f1, f2 = fit_power_law(x, y), fit_power_law(s * x, y)
    assert f2.exponent == pytest.approx(f1.exponent, rel=1e-9)
    assert f2.amplitude == pytest.approx(f1.amplitude * s ** (-f1.exponent), rel=1e-9)


def test_scale_covariance_with_offset():
    x = np.logspace(-1, 3, 30)
    y = 14.0 + 1.1 * x**0.61
    s = 7.3
    f1 = fit_power_law(x, y, with_offset=True)
    f2 = fit_power_law(s * x, y, with_offset=True)
    assert f2.exponent == pytest.approx(f1.exponent, rel=1e-9)
    assert f2.amplitude == pytest.approx(f1.amplitude * s ** (-f1.exponent), rel=1e-9)


def test_noisy_power_law_monte_carlo():
    x = np.logspace(0, 4, 50)
    y = 1.1 * x**0.3
    rng = np.random.default_rng(20240)
    ok = 0
    for _ in range(1000):
        f = fit_power_law(x, y * (1 + 0.05 * rng.standard_normal(x.size)))
        ok += abs(f.amplitude / 1.1 - 1) < 0.1 and abs(f.exponent / 0.3 - 1) < 0.1
    assert ok >= 950


def test_sigma_shifts_weights():
    x = np.logspace(0, 2, 10)
    y = 2.0 * x**0.5
    y[-1] *= 1.5
    sigma = np.ones_like(y)
    sigma[-1] = 1e6
    f = fit_power_law(x, y, sigma=sigma)
    assert f.exponent == pytest.approx(0.5, rel=1e-4)


@pytest.mark.parametrize(
    "x,y,msg",
    [
        ([1.0, 1.0, 1.0], [1.0, 2.0, 3.0], "all x equal"),
        ([1.0, 2.0], [1.0, 2.0], "at least 3"),
        ([0.0, 1.0, 2.0], [1.0, 2.0, 3.0], "x must be > 0"),
        ([1.0, 2.0, 3.0], [1.0, -2.0, 3.0], "y must be > 0"),
        ([1.0, 2.0, np.nan], [1.0, 2.0, 3.0], "finite"),
    ],
)
def test_power_law_rejects(x, y, msg):
    with pytest.raises(ValidationError, match=msg):
        fit_power_law(x, y)


def test_non_convergence_carries_trace():
    x = np.linspace(1.0, 3.0, 12)
    with pytest.raises(FitError) as exc:
        fit_power_law(x, 1.0 + x**6, with_offset=True)
    assert "trace" in exc.value.diagnostics
    assert exc.value.diagnostics["trace"].ndim == 2


# -- piecewise linewidth ----------------------------------------------------


@pytest.fixture(scope="module")
def law():
    return HotBathModel.eight_shield()


def test_piecewise_noiseless_recovery(law):
    x = np.logspace(-2, 5, 60)
    f = fit_piecewise_linewidth(x, law.total_damping_law(x))
    assert f.gamma_phi / TWO_PI == pytest.approx(14.54e3, rel=1e-6)
    assert f.low.amplitude / TWO_PI == pytest.approx(1.1e3, rel=1e-6)
    assert f.low.exponent == pytest.approx(0.61, rel=1e-6)
    assert f.high.offset / TWO_PI == pytest.approx(23.91e3, rel=1e-6)
    assert f.high.amplitude / TWO_PI == pytest.approx(9.01e3, rel=1e-6)
    assert f.high.exponent == pytest.approx(0.29, rel=1e-6)
    assert f.crossover == pytest.approx(law.crossover, rel=1e-6)
    assert 1.0e3 < f.crossover < 1.2e3
    assert not f.gamma_phi_upper_bound


def test_piecewise_composite_continuous_and_monotone(law):
    x = np.logspace(-2, 5, 60)
    f = fit_piecewise_linewidth(x, law.total_damping_law(x) * (1 + 0.01 * np.sin(x)))
    xc = f.crossover
    assert f.low(xc) == pytest.approx(f.high(xc), rel=1e-10)
    grid = np.logspace(-2, 5, 2000)
    assert np.all(np.diff(f.total(grid)) >= 0)


def test_piecewise_to_model_reproduces_law(law):
    x = np.logspace(-2, 5, 60)
    m = fit_piecewise_linewidth(x, law.total_damping_law(x)).to_model()
    grid = np.logspace(-1, 5, 50)
    assert m.damping(grid) == pytest.approx(law.damping(grid), rel=1e-6)


def test_plateau_only():
    x = np.logspace(-2, 0.9, 12)
    y = np.full_like(x, TWO_PI * 14.54e3)
    f = fit_piecewise_linewidth(x, y)
    assert f.low is None and f.high is None
    assert f.gamma_phi == pytest.approx(TWO_PI * 14.54e3)
    assert f.total(5.0) == pytest.approx(f.gamma_phi)
    with pytest.raises(ValidationError):
        f.to_model()


def test_missing_plateau_flags_upper_bound(law):
    x = np.logspace(1.5, 5, 40)
    y = law.total_damping_law(x)
    with pytest.warns(RuntimeWarning, match="upper bound"):
        f = fit_piecewise_linewidth(x, y)
    assert f.gamma_phi_upper_bound
    assert f.gamma_phi == pytest.approx(y.min())


def test_piecewise_order_independent(law):
    x = np.logspace(-2, 5, 60)
    y = law.total_damping_law(x)
    perm = np.random.default_rng(3).permutation(x.size)
    f1 = fit_piecewise_linewidth(x, y)
    f2 = fit_piecewise_linewidth(x[perm], y[perm])
    assert f1.crossover == f2.crossover
    assert f1.high.exponent == f2.high.exponent


# -- conductance ------------------------------------------------------------


def test_zero_power_zero_temperature():
    assert bath_temperature_from_power(ConductanceModel(1e-6), 0.0) == 0.0


@settings(max_examples=50, deadline=None)
@given(p=st.floats(1e-12, 1e-3), eps=st.floats(1e-9, 1e-3), alpha=st.floats(0.5, 4.0))
def test_conductance_roundtrip(p, eps, alpha):
    m = ConductanceModel(eps, alpha)
    t = bath_temperature_from_power(m, p)
    assert absorbed_power(m, t) == pytest.approx(p, rel=1e-12)


def test_exact_delta_t_branch():
    m = ConductanceModel(1e-6, 2.3, eta_abs=0.5)
    t0 = 0.05
    p_th = absorbed_power(m, 0.1, t0)  # 0.1 K < 5 * t0, so exact branch
    assert p_th < m.epsilon * 0.1**3.3
    t = bath_temperature_from_power(m, p_th / m.eta_abs, t0)
    assert t == pytest.approx(0.1, rel=1e-12)


def test_alpha_exponent():
    assert ConductanceModel(1.0, 2.3).occupancy_exponent == pytest.approx(0.303, abs=5e-4)


def test_rejects_zero_epsilon():
    with pytest.raises(ValidationError):
        ConductanceModel(0.0)


def test_ratio_1d_2d():
    assert occupancy_ratio_1d_2d(42, 2.3, 2) == pytest.approx(RATIO_1D_2D, rel=1e-12)
    assert abs(occupancy_ratio_1d_2d(42, 2.3, 2) - 6.2) <= 0.05
    assert occupancy_ratio_1d_2d(1, 2.3, 1) == 1.0
    # measured amplitude ratio, for comparison
    assert 7.94 / 1.1 == pytest.approx(7.2, abs=0.05)


@settings(max_examples=50, deadline=None)
@given(e=st.floats(0.1, 100), de=st.floats(0.01, 10), w=st.floats(0.1, 10), dw=st.floats(0.01, 10))
def test_ratio_monotone(e, de, w, dw):
    r = occupancy_ratio_1d_2d(e, 2.3, w)
    assert occupancy_ratio_1d_2d(e + de, 2.3, w) > r
    assert occupancy_ratio_1d_2d(e, 2.3, w + dw) > r


def test_ratio_rejects_nonpositive():
    with pytest.raises(ValidationError):
        occupancy_ratio_1d_2d(0, 2.3, 1)


# -- CSV --------------------------------------------------------------------


def test_sweep_csv_roundtrip(tmp_path, law):
    x = np.logspace(-2, 5, 25)
    y = law.total_damping_law(x)
    path = tmp_path / "sweep.csv"
    bath.write_sweep(path, x, y, comments=["synthetic"])
    x2, y2, s2 = bath.read_sweep(path)
    assert np.array_equal(x, x2) and np.array_equal(y, y2) and s2 is None
    assert b"\r" not in path.read_bytes()


def test_fit_report_has_decomposition(tmp_path, law):
    x = np.logspace(-2, 5, 60)
    f = fit_piecewise_linewidth(x, law.total_damping_law(x))
    text = bath.write_fit_report(tmp_path / "r.csv", f, rate_unit_hz=True)
    assert "gamma_phi" in text and "decomposition" in text
    assert "parameter,value,stderr,unit" in text


def test_missing_column_rejected(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("x,value\n1,2\n")
    with pytest.raises(ValidationError, match="n_c"):
        bath.read_sweep(p)
