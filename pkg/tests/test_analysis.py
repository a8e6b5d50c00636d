import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nonlocal_cl.analysis import (
    BLOWUP_DATUM, StudySolverConfig, concentration_report, concentration_study, detect_blowup,
    existence_bound, fit_blowup_time, predicted_position, qr_functional, run_counterexample,
    velocity_window_bracket,
)
from nonlocal_cl.kernels import make_smoothed_kernel, make_step_kernel
from nonlocal_cl.lagrangian import LagrangianRun, seed_from_datum
from nonlocal_cl.velocity import make_affine_desired_velocity, make_identity_velocity


def test_blowup_bounds_match_reference(oracle):
    eb = existence_bound(make_identity_velocity(), make_step_kernel(), 2.0)
    assert eb.K1 == 0.0 and eb.K2 == 2.0
    assert eb.T_q == pytest.approx(oracle["blowup"]["T_q"], rel=1e-15)
    assert eb.T_star_lower == pytest.approx(oracle["blowup"]["T_star_lower"], rel=1e-15)
    assert eb.T_star_lower <= 0.5


@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, 5.0), st.floats(0.1, 4.0))
def test_series_matches_direct_sum(slope, norm):
    V = make_affine_desired_velocity(0.0, slope)
    k = make_smoothed_kernel(0.5, 36)
    eb = existence_bound(V, k, norm)
    K1, K2 = eb.K1, eb.K2
    direct = sum(math.log(2.0) / (K1 + 2.0**j * K2 * norm) for j in range(1, 200))
    assert eb.T_star_lower == pytest.approx(direct, rel=1e-10)
    assert eb.T_q == pytest.approx(math.log(2.0) / (K1 + 2.0 * K2 * norm))
    assert eb.T_q < eb.T_star_lower


def test_sobolev_route_for_finite_q():
    k = make_smoothed_kernel(0.5, 36)
    eb = existence_bound(make_identity_velocity(), k, 1.0, q=1.0)
    assert eb.K2 == pytest.approx(k.gradient_lp_norm(math.inf))
    eb2 = existence_bound(make_identity_velocity(), k, 1.0, q=2.0)
    assert eb2.K2 == pytest.approx(k.gradient_lp_norm(2.0))
    with pytest.raises(ValueError):
        existence_bound(make_identity_velocity(), make_step_kernel(), 1.0, q=2.0)
    with pytest.raises(ValueError):
        existence_bound(make_identity_velocity(), k, 0.0)


def _pair(k1, k2, P=400, dt=1e-2, t_end=0.4):
    runs = []
    for k in (k1, k2):
        r = LagrangianRun(seed_from_datum(BLOWUP_DATUM, P), k, make_identity_velocity(), dt, snapshot_every=10)
        runs.append(r.advance_to(t_end))
    return runs


def test_qr_identical_flows_vanish_and_monotone_in_R():
    a, b = _pair(make_smoothed_kernel(0.5, 18), make_smoothed_kernel(0.5, 18))
    times = [0.1, 0.2, 0.3, 0.4]
    assert np.all(qr_functional(a, b, math.inf, times).values == 0.0)
    a, b = _pair(make_smoothed_kernel(0.5, 18), make_smoothed_kernel(0.5, 36))
    vals = [qr_functional(a, b, R, times).values for R in (1.0, 2.0, 4.0, math.inf)]
    for lo, hi in zip(vals, vals[1:]):
        assert np.all(lo <= hi)
    assert qr_functional(a, b, 1.0, times).cutoff == "exponential"
    with pytest.raises(ValueError):
        qr_functional(a, b, 1.0, [0.15])


def test_qr_requires_identical_seeding():
    r1 = LagrangianRun(seed_from_datum(BLOWUP_DATUM, 100), make_step_kernel(), make_identity_velocity(), 0.1)
    r2 = LagrangianRun(seed_from_datum(BLOWUP_DATUM, 101), make_step_kernel(), make_identity_velocity(), 0.1)
    with pytest.raises(ValueError):
        qr_functional(r1, r2, 1.0, [0.0])


@settings(max_examples=30, deadline=None)
@given(st.floats(0.2, 2.0), st.floats(0.1, 5.0))
def test_fit_recovers_reciprocal_profile(T, c):
    t = np.linspace(0.0, 0.9 * T, 40)
    assert fit_blowup_time(t, c / (T - t)) == pytest.approx(T, rel=1e-9)


def _fake_run(t, m):
    return SimpleNamespace(history=[SimpleNamespace(t=a, max_u=b) for a, b in zip(t, m)])


def test_detect_blowup_on_synthetic_history():
    t = np.linspace(0.0, 0.49, 491)
    est = detect_blowup(_fake_run(t, 1.0 / (0.5 - t)), threshold=50.0)
    assert est.detected
    assert est.extrapolated == pytest.approx(0.5, rel=1e-9)
    assert est.first_exceed == pytest.approx(0.48, abs=1.5e-3)
    flat = detect_blowup(_fake_run(t, np.full(t.size, 2.0)), threshold=50.0)
    assert not flat.detected and math.isnan(flat.extrapolated)


def test_predicted_position():
    assert predicted_position(0.5, 0.0) == 0.25
    assert predicted_position(1.0, 0.49) == pytest.approx(0.495)
    assert predicted_position(0.0, 2.0) == 0.5
    assert predicted_position(1.0, 1.0) == 1.0
    assert predicted_position(1.0 / 3.0, 0.5) == pytest.approx(0.5)


def test_counterexample_small_run():
    cfg = StudySolverConfig(particles=400, dt=1e-3, t_end=1.0, record_every=10)
    run = run_counterexample(1.0, 18, cfg)
    rep = concentration_report(run, 1.0)
    assert rep.n == 18 and rep.r == pytest.approx(8.0 / 9.0)
    # velocities lie in [0, 1], so the centroid moves at most t; the limit
    # value 0.375 is only approached as n grows
    assert 0.25 < rep.centroid[rep.at(0.25)] <= 0.5
    assert rep.centroid[-1] > 0.9
    assert velocity_window_bracket(run, 1.0) == 0
    assert max(rep.mass) - min(rep.mass) < 1e-14
    s = rep.summary()
    assert s["final_time"] == 1.0 and s["n"] == 18
    with pytest.raises(ValueError):
        rep.at(0.255)


def test_symmetric_alpha_centroid_is_exact():
    cfg = StudySolverConfig(particles=400, dt=1e-3, t_end=1.0, record_every=100)
    rep = concentration_study(0.5, [18], cfg)[18]
    assert rep.final_centroid_error < 1e-12


def test_study_rejects_small_n():
    with pytest.raises(ValueError):
        concentration_study(0.5, [12])
