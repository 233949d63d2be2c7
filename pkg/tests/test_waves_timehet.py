import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lattice_kpp.coeffs import make_family
from lattice_kpp.errors import AdmissibilityError, ConstructionError, ParameterError
from lattice_kpp.floquet import find_mu_star
from lattice_kpp.metrics import audit_stability_hypotheses, perturb_front, stability_trace
from lattice_kpp.waves_timehet import (
    B_of_t,
    build_A,
    c0_tilde,
    c_of_t,
    estimate_fbar,
    g,
    reflect,
    speed_function,
    speed_roots,
)


def test_constant_rate_statistics():
    stats = estimate_fbar(make_family("time-only", {"r0": 1.3, "amps": [], "freqs": []}))
    for v in (stats.f_bar_inf, stats.f_bar_sup, stats.f_bar_inf_plus, stats.f_bar_sup_plus):
        assert v == pytest.approx(1.3, abs=1e-10)


def test_sinusoidal_rate_statistics_within_window_bound():
    H = 200.0
    stats = estimate_fbar(make_family("time-only", {"amps": [1.0], "freqs": [2 * math.pi]}), H)
    # a window of length L changes the mean of sin(2 pi t) by at most 1 / (pi L)
    bound = 1.0 / (math.pi * H / 4)
    assert abs(stats.f_bar_inf - 1.0) <= bound
    assert abs(stats.f_bar_sup - 1.0) <= bound
    assert stats.f_bar_inf <= 1.0 <= stats.f_bar_sup


def test_quasiperiodic_statistics(quasiperiodic):
    stats = estimate_fbar(quasiperiodic)
    assert stats.f_bar_inf == pytest.approx(1.0, abs=0.02)
    assert stats.f_bar_inf <= stats.f_bar_sup


def test_short_statistics_horizon_is_rejected(quasiperiodic):
    with pytest.raises(ParameterError):
        estimate_fbar(quasiperiodic, horizon=20.0)


def test_site_dependent_fields_are_rejected(periodic_field):
    with pytest.raises(ParameterError):
        estimate_fbar(periodic_field)


def test_critical_speed_matches_floquet_minimum(homogeneous):
    c0, mu0 = c0_tilde(1.0)
    speed = find_mu_star(homogeneous)
    assert c0 == pytest.approx(speed.c_star, abs=1e-6)
    assert mu0 == pytest.approx(speed.mu_star, abs=1e-4)
    assert c0_tilde(2.0)[0] > c0


@pytest.mark.parametrize("fbar", [0.0, -0.5])
def test_nonpositive_average_is_inadmissible(fbar):
    with pytest.raises(AdmissibilityError):
        c0_tilde(fbar)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.2, 3.0), st.floats(0.05, 3.0))
def test_speed_roots_solve_the_dispersion_relation(fbar, offset):
    c0, mu0 = c0_tilde(fbar)
    small, large = speed_roots(c0 + offset, fbar)
    assert small < mu0 < large
    for m in (small, large):
        assert float(speed_function(m, fbar)) == pytest.approx(c0 + offset, rel=1e-10)


def test_speed_below_critical_is_rejected():
    c0, _ = c0_tilde(1.0)
    with pytest.raises(ParameterError):
        speed_roots(c0 - 0.1, 1.0)


def test_reflection_of_constant_rate_is_zero():
    times = np.linspace(0.0, 50.0, 5001)
    A = reflect(times, np.full(times.size, 0.8), 0.2)
    assert A.sup_A == 0.0
    assert A.margin == pytest.approx(0.8)


def test_reflection_of_sinusoid_matches_closed_form():
    b0, delta = 1.0, 0.25
    times = np.arange(0.0, 50.0 + 1e-9, 0.01)
    A = reflect(times, b0 + np.sin(times), delta)
    Y = (delta - b0) * times + np.cos(times) - 1.0
    exact = Y - np.minimum.accumulate(Y)
    np.testing.assert_allclose(A.A, exact, atol=1e-4)
    assert A.margin >= delta / 2
    assert np.all(A.A >= 0)


def test_reflection_compensates_negative_rate_until_growth_guard():
    times = np.linspace(0.0, 50.0, 5001)
    A = reflect(times, np.full(times.size, -0.5), 0.2)
    np.testing.assert_allclose(A.A, 0.7 * times, atol=1e-10)
    with pytest.raises(ConstructionError):
        reflect(times, np.full(times.size, -0.5), 0.2, horizon=10.0)


def test_delta_above_half_the_average_is_rejected(quasiperiodic, timehet_wave):
    w = timehet_wave
    with pytest.raises(ConstructionError):
        build_A(quasiperiodic, w.mu, w.mu_tilde, delta=10.0, stats_horizon=50.0, t_range=(-10, 10))
    with pytest.raises(ParameterError):
        build_A(quasiperiodic, w.mu, 2.5 * w.mu)


def test_B_averages_exceed_delta(quasiperiodic, timehet_wave):
    w = timehet_wave
    ts = np.arange(-50.0, 50.0, 0.01)
    B = B_of_t(quasiperiodic, w.mu, w.mu_tilde, ts)
    assert B.mean() > 2 * w.delta
    assert w.A.margin >= w.delta / 2


def test_instantaneous_speed_samples_are_exact(timehet_wave):
    w = timehet_wave
    np.testing.assert_array_equal(w.c_samples, c_of_t(w.field, w.mu, w.c_times))
    expected = (g(w.mu) + w.field.f0(0.0, np.zeros(1, dtype=int))[0]) / w.mu
    assert c_of_t(w.field, w.mu, 0.0) == pytest.approx(float(expected), rel=1e-14)


def test_transition_wave_diagnostics(timehet_wave):
    w = timehet_wave
    failed = [(d.name, d.value, d.threshold) for d in w.diagnostics if not d.passed]
    assert not failed
    assert w.gamma > w.c0
    assert w.mu < w.mu_tilde < min(2 * w.mu, w.mu_star)


def test_trapped_data_stay_between_envelopes(timehet_wave):
    report = audit_stability_hypotheses(timehet_wave.samples(), n_trapped=50, seed=7, rel=1e-8)
    clause = report.clause("envelope invariance")
    assert clause.passed, clause.detail


def test_transition_wave_attracts_front_perturbations(timehet_wave):
    w = timehet_wave
    rng = np.random.default_rng(11)
    U0 = w.values[0]
    u0 = perturb_front(U0, rng)
    trace = stability_trace(w.field, int(w.sites[0]), U0, u0, 0.0, 40.0, w.boundary())
    assert trace.ratio[0] > 0.05
    assert trace.value_at(40.0) < 0.01
