import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from omcavity import csvio
from omcavity import design as D
from omcavity.design import (
    DesignBounds,
    DesignVector,
    NelderMeadOptions,
    QuadraticFitness,
    evaluate,
    multi_restart,
    nelder_mead,
    scale_to_target_wavelength,
)
from omcavity.errors import ValidationError
from omcavity.model import TWO_PI

BOUNDS = DesignBounds()
CENTER = np.array([150, 220, 120, 380, 420, 250, 150, 330, 380.0])
WIDTH = np.array([80, 90, 60, 120, 120, 60, 60, 60, 120.0])
START = np.array([175, 250, 150, 400, 400, 250, 150, 400, 400.0])


def fixed(omega_o=D.TARGET_OMEGA, omega_m=TWO_PI * 10e9, g0=TWO_PI * 1.4e6, q=1e7):
    return lambda design: (omega_o, omega_m, g0, q)


def broken(design):
    raise RuntimeError("mesh failed")


design_arrays = st.lists(st.floats(0.0, 1.0), min_size=9, max_size=9).map(
    lambda u: BOUNDS.lower + np.array(u) * BOUNDS.width)


# -- evaluate ---------------------------------------------------------------


def test_low_q_filtered():
    ev = evaluate(DesignVector.from_array(START), fixed(q=1e6))
    assert ev.status == D.FILTERED and ev.fitness == 0.0


def test_ok_fitness_is_minus_abs_g0():
    ev = evaluate(DesignVector.from_array(START), fixed(q=1e7, g0=TWO_PI * 1.4e6))
    assert ev.status == D.OK
    assert ev.fitness == -TWO_PI * 1.4e6
    ev = evaluate(DesignVector.from_array(START), fixed(g0=-TWO_PI * 1.4e6))
    assert ev.fitness == -TWO_PI * 1.4e6


def test_evaluator_failure_captured():
    ev = evaluate(DesignVector.from_array(START), broken)
    assert ev.status == D.FAILED and ev.fitness == 0.0
    assert "mesh failed" in ev.reason


def test_non_finite_output_is_failure():
    ev = evaluate(DesignVector.from_array(START), fixed(g0=math.nan))
    assert ev.status == D.FAILED and ev.fitness == 0.0


# -- wavelength rescaling ---------------------------------------------------


def test_scale_identity():
    d = DesignVector.from_array(START)
    out = scale_to_target_wavelength(d, D.TARGET_OMEGA, D.TARGET_OMEGA)
    assert np.array_equal(out.as_array(), START) and out.scale == 1.0


def test_one_scaling_step_lands_on_target():
    sur = D.SurrogateFitness(wells=D._default_wells(), shape_ref=1.02, detune=0.03)
    ev = evaluate(DesignVector.from_array(START), sur, bounds=BOUNDS)
    assert ev.status == D.OK
    assert ev.omega_o == pytest.approx(D.TARGET_OMEGA, rel=1e-12)
    assert ev.design.scale != 1.0
    assert ev.design.lattice()["t"] == 220.0
    assert ev.design.lattice()["a"] == pytest.approx(500.0 * ev.design.scale, rel=1e-15)


@settings(max_examples=60, deadline=None)
@given(x=design_arrays, ratio=st.floats(0.5, 2.0))
def test_scaling_preserves_ratios(x, ratio):
    d = DesignVector.from_array(x)
    out = scale_to_target_wavelength(d, ratio * D.TARGET_OMEGA, D.TARGET_OMEGA)
    y = out.as_array()
    assert y / y[0] == pytest.approx(x / x[0], rel=1e-12)
    lat = out.lattice()
    assert lat["r"] / lat["a"] == pytest.approx(205.0 / 500.0, rel=1e-12)
    assert y[0] / lat["a"] == pytest.approx(x[0] / 500.0, rel=1e-12)


def test_scaled_infeasible_reported():
    x = BOUNDS.repair(START)
    x[D._IDX["h_oc"]] = x[D._IDX["h_ic"]] + 60.0
    d = DesignVector.from_array(x)
    with pytest.raises(ValidationError, match="h_oc - h_ic"):
        scale_to_target_wavelength(d, 0.9 * D.TARGET_OMEGA, D.TARGET_OMEGA, BOUNDS)
    ev = evaluate(d, fixed(omega_o=0.9 * D.TARGET_OMEGA), bounds=BOUNDS)
    assert ev.status == D.FAILED and ev.fitness == 0.0
    assert np.array_equal(ev.design.as_array(), x)


def test_scale_rejects_nonpositive():
    with pytest.raises(ValidationError):
        scale_to_target_wavelength(DesignVector.from_array(START), 0.0)


# -- constraints ------------------------------------------------------------


@settings(max_examples=200, deadline=None)
@given(u=st.lists(st.floats(-0.5, 1.5), min_size=9, max_size=9))
def test_repair_always_feasible(u):
    x = BOUNDS.lower + np.array(u) * BOUNDS.width
    assert BOUNDS.feasible(BOUNDS.repair(x))


@settings(max_examples=100, deadline=None)
@given(x=design_arrays)
def test_repair_keeps_feasible_points(x):
    if BOUNDS.feasible(x):
        assert np.array_equal(BOUNDS.repair(x), x)


def test_repair_pushes_gap_to_exact_minimum():
    x = START.copy()
    x[D._IDX["h_ic"]], x[D._IDX["h_oc"]] = 300.0, 320.0
    y = BOUNDS.repair(x)
    assert y[D._IDX["h_oc"]] - y[D._IDX["h_ic"]] == pytest.approx(60.0, abs=1e-12)
    assert (y[D._IDX["h_oc"]] + y[D._IDX["h_ic"]]) / 2 == pytest.approx(310.0)


def test_configurable_gap():
    b = DesignBounds(gap=55.0)
    x = START.copy()
    x[D._IDX["h_ic"]], x[D._IDX["h_oc"]] = 300.0, 357.0
    assert b.feasible(x) and not BOUNDS.feasible(x)


def test_bounds_validation():
    with pytest.raises(ValidationError):
        DesignBounds(lower=np.zeros(9), upper=np.zeros(9))
    with pytest.raises(ValidationError, match="h_o - h_i"):
        DesignBounds(gap=520.0)


# -- Nelder-Mead ------------------------------------------------------------


def test_convex_converges():
    q = QuadraticFitness(CENTER, WIDTH, curvature=TWO_PI * 2e6 / 400)
    x_star = q.constrained_optimum(BOUNDS)
    assert np.array_equal(x_star, CENTER)
    opt = NelderMeadOptions(tol_f=1e-14, tol_x=1e-9, max_evals=1999)
    r = nelder_mead(START, q, BOUNDS, opt)
    assert r.n_evals < 2000
    assert np.max(np.abs(r.best.design.as_array() - x_star) / BOUNDS.width) <= 1e-6


def test_boundary_optimum_on_gap_face():
    c = CENTER.copy()
    c[D._IDX["h_oc"]] = c[D._IDX["h_ic"]] + 40.0
    q = QuadraticFitness(c, WIDTH, curvature=TWO_PI * 2e6 / 400)
    x_star = q.constrained_optimum(BOUNDS)
    assert x_star[D._IDX["h_oc"]] - x_star[D._IDX["h_ic"]] == pytest.approx(60.0)
    r = nelder_mead(START, q, BOUNDS, NelderMeadOptions(tol_f=1e-14, tol_x=1e-9))
    best = r.best.design
    tol = 1e-6 * BOUNDS.width[D._IDX["h_oc"]]
    assert best.h_oc - best.h_ic == pytest.approx(60.0, abs=tol)
    f_star = evaluate(DesignVector.from_array(x_star), q).fitness
    # sliding along the face is slower than interior convergence
    assert r.best.fitness == pytest.approx(f_star, rel=1e-7)
    assert np.max(np.abs(best.as_array() - x_star) / BOUNDS.width) < 1e-3


def test_infeasible_start_rejected():
    x = START.copy()
    x[D._IDX["h_oc"]] = x[D._IDX["h_ic"]]
    with pytest.raises(ValidationError, match="infeasible start"):
        nelder_mead(x, fixed(), BOUNDS)


def test_trace_records_every_evaluation():
    calls = []

    def counting(design):
        calls.append(design)
        return D.TARGET_OMEGA, TWO_PI * 10e9, TWO_PI * (1e6 - design.d), 1e7

    r = nelder_mead(START, counting, BOUNDS, NelderMeadOptions(max_evals=150))
    assert len(calls) == len(r.trace) == r.n_evals <= 150
    assert len(r.trace.simplices) > 0


@pytest.fixture(scope="module")
def search():
    return multi_restart(D.default_surrogate(), BOUNDS, n_restarts=6, seed=11)


def test_every_trace_row_feasible(search):
    assert len(search.trace) == search.n_evals
    for ev in search.trace.evaluations:
        assert BOUNDS.feasible(ev.candidate.as_array())
        if ev.status == D.OK:
            assert BOUNDS.feasible(ev.design.as_array())


def test_all_statuses_and_invariants(search):
    statuses = {ev.status for ev in search.trace.evaluations}
    assert {D.OK, D.FAILED} <= statuses
    low_q = START.copy()
    low_q[D._IDX["d"]] = 290.0
    assert evaluate(DesignVector.from_array(low_q), D.default_surrogate()).status == D.FILTERED
    for ev in search.trace.evaluations:
        if ev.status == D.OK:
            assert ev.q_scat >= D.Q_THRESHOLD and ev.fitness == -abs(ev.g0)
        else:
            assert ev.fitness == 0.0


def test_best_so_far_monotone(search):
    for k in range(6):
        sub = D.SearchTrace(restart=k)
        for ev, r in zip(search.trace.evaluations, search.trace.restarts):
            if r == k:
                sub.append(ev)
        b = sub.best_so_far()
        b = b[~np.isnan(b)]
        assert np.all(np.diff(b) <= 0)


def test_global_best_is_trace_minimum(search):
    assert search.best.fitness == search.trace.fitness.min()


def test_trace_csv(search):
    text = search.trace.to_csv(comments=["seed=11"])
    cols, comments = csvio.loads(text)
    assert list(cols) == list(D.SearchTrace.HEADER)
    assert len(cols["status"]) == search.n_evals
    assert comments == ["seed=11"]
    restarts = np.array(cols["restart"], dtype=int)
    assert np.all(np.diff(restarts) >= 0)


def test_bit_reproducible_and_thread_independent(search):
    again = multi_restart(D.default_surrogate(), BOUNDS, n_restarts=6, seed=11, threads=3)
    assert again.trace.to_csv() == search.trace.to_csv()


def test_single_restart_is_nelder_mead():
    sur = D.default_surrogate()
    r1 = multi_restart(sur, BOUNDS, n_restarts=1, seed=5)
    x0 = BOUNDS.random_feasible(np.random.default_rng(np.random.SeedSequence(5).spawn(1)[0]))
    r2 = nelder_mead(x0, sur, BOUNDS)
    assert r1.trace.to_csv() == r2.trace.to_csv()


def test_multi_restart_validation():
    with pytest.raises(ValidationError):
        multi_restart(D.default_surrogate(), BOUNDS, n_restarts=0)


def test_noise_is_deterministic():
    sur = D.default_surrogate(noise=0.01, seed=3)
    d = DesignVector.from_array(START)
    assert sur(d) == sur(d)
    assert sur(d)[2] != D.default_surrogate(noise=0.01, seed=4)(d)[2]


@pytest.mark.slow
def test_noise_robustness():
    clean = nelder_mead(START, D.default_surrogate(), BOUNDS).best.fitness
    truth = D.default_surrogate()
    best, true_best = [], []
    for seed in range(100):
        r = nelder_mead(START, D.default_surrogate(noise=0.01, seed=seed), BOUNDS,
                        NelderMeadOptions(keep_simplices=False))
        best.append(r.best.fitness)
        true_best.append(-truth.g0(r.best.design.as_array()))
    assert abs(np.median(best) / clean - 1) <= 0.05
    assert abs(np.median(true_best) / clean - 1) <= 0.05


def _basin(sur, x):
    d = [np.sqrt((((x - w.center) / w.width) ** 2).sum()) for w in sur.wells]
    k = int(np.argmin(d))
    return k if d[k] < 0.5 else -1


@pytest.mark.slow
def test_three_basins_visited():
    sur = D.default_surrogate()
    opt = NelderMeadOptions(tol_f=1e-3, keep_simplices=False)
    hits = 0
    for seed in range(20):
        r = multi_restart(sur, BOUNDS, 50, seed, opt)
        best = {}
        for ev, k in zip(r.trace.evaluations, r.trace.restarts):
            if ev.status == D.OK and (k not in best or ev.fitness < best[k].fitness):
                best[k] = ev
        found = {_basin(sur, ev.design.as_array()) for ev in best.values()}
        hits += {0, 1, 2} <= found
    assert hits >= 19
