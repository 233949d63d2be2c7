import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from lattice_kpp.coeffs import CoefficientField, Structure
from lattice_kpp.errors import DomainError, WindowExitError
from lattice_kpp.lattice import Boundary
from lattice_kpp.metrics import (
    audit_stability_hypotheses,
    bounded_shift,
    envelope_violation,
    fit_log_rate,
    front_location,
    ordering_defect,
    part_metric,
    part_metric_monitor,
    part_metric_scan,
    ratio_norm,
)

positive = st.lists(st.floats(1e-3, 1e3), min_size=3, max_size=3)


@pytest.mark.parametrize("u,v,rho", [
    ([1.0, 2.0], [2.0, 1.0], math.log(2.0)),
    ([1.0, 1.0], [1.0, 1.0], 0.0),
    ([3.0, 3.0, 3.0], [1.0, 1.0, 1.0], math.log(3.0)),
    ([1.0, 4.0], [2.0, 2.0], math.log(2.0)),
])
def test_part_metric_examples(u, v, rho):
    assert part_metric(u, v) == pytest.approx(rho, abs=1e-15)


@pytest.mark.parametrize("u", [[1.0, 0.0], [1.0, -1.0], [], [1.0, np.inf]])
def test_part_metric_requires_positive_vectors(u):
    with pytest.raises(DomainError):
        part_metric(u, [1.0] * max(len(u), 1))


@settings(max_examples=80, deadline=None)
@given(positive, positive, positive)
def test_part_metric_is_a_metric(u, v, w):
    u, v, w = map(np.array, (u, v, w))
    assert part_metric(u, v) == pytest.approx(part_metric(v, u))
    assert part_metric(u, u) == 0.0
    assert part_metric(u, w) <= part_metric(u, v) + part_metric(v, w) + 1e-12


@settings(max_examples=40, deadline=None)
@given(positive, st.floats(0.01, 100.0))
def test_part_metric_of_scaled_vector(u, a):
    u = np.array(u)
    assert part_metric(a * u, u) == pytest.approx(abs(math.log(a)), abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(positive, positive)
def test_closed_form_matches_defining_infimum(u, v):
    u, v = np.array(u), np.array(v)
    rho = part_metric(u, v)
    assume(rho < 10)
    alphas = np.exp(np.linspace(0.0, 10.0, 200_001))
    # the scan overestimates by at most one grid step in ln(alpha)
    assert rho - 1e-12 <= part_metric_scan(u, v, alphas) <= rho + 5e-5 + 1e-12


@settings(max_examples=60, deadline=None)
@given(positive, positive)
def test_ratio_norm_bounded_by_part_metric(u, v):
    u, v = np.array(u), np.array(v)
    assert ratio_norm(u, v) <= math.expm1(part_metric(u, v)) * (1 + 1e-12)


def test_ratio_norm_rejects_zero_reference():
    with pytest.raises(DomainError):
        ratio_norm([1.0, 1.0], [1.0, 0.0])


def step_profile(X, sites):
    return np.where(sites <= X, 1.0, 0.0)


def test_front_of_step_profiles():
    sites = np.arange(-10, 30)
    times = np.arange(0.0, 10.0, 0.5)
    Xs = (2 * times).astype(int)
    values = np.array([step_profile(X, sites) for X in Xs])
    trace = front_location(times, sites, values, np.ones_like(values), taus=(1.0, 5.0))
    np.testing.assert_array_equal(trace.X, Xs)
    assert trace.shift_bounds == {1.0: 2, 5.0: 10}
    assert trace.slope() == pytest.approx(2.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(-5, 5))
def test_front_is_translation_equivariant(shift):
    sites = np.arange(-20, 40)
    times = np.array([0.0, 1.0])
    values = np.array([1.0 / (1.0 + np.exp(sites - x)) for x in (3.2, 7.9)])
    base = front_location(times, sites, values, np.ones_like(values))
    moved = front_location(times, sites + shift, values, np.ones_like(values))
    np.testing.assert_array_equal(moved.X, base.X + shift)


def test_front_leaving_the_window():
    sites = np.arange(10)
    times = np.array([0.0, 1.0])
    values = np.array([step_profile(4, sites), np.ones(10)])
    with pytest.raises(WindowExitError) as info:
        front_location(times, sites, values, np.ones_like(values))
    assert info.value.last_valid_time == 0.0


def test_bounded_shift_windows():
    times = np.arange(6.0)
    X = np.array([0, 1, 5, 5, 6, 20])
    assert bounded_shift(times, X, 1.0) == 14
    assert bounded_shift(times, X, 0.0) == 0


def test_part_metric_is_non_increasing_along_pairs(homogeneous, rng):
    u0 = rng.uniform(0.1, 1.5, (100, 40))
    v0 = rng.uniform(0.1, 1.5, (100, 40))
    trace = part_metric_monitor(homogeneous, u0, v0, 0.0, 2.0, stride=5, sigma=0.1)
    assert trace.non_increasing
    assert np.nanmin(trace.decrement) > 0
    assert trace.rho.shape == (trace.times.size, 100)


def test_monitor_detects_loss_of_positivity():
    # dispersal far above the declared bound lets a single step overshoot below zero
    field = CoefficientField(d_eval=lambda t, j: np.full(np.shape(j), 100.0),
                             f_eval=lambda t, j, u: 1.0 - u, structure=Structure.HOMOGENEOUS,
                             M0=1.0, d_min=1.0, d_max=1.0)
    u0 = np.array([1.0, 1e-6, 1e-6, 1e-6, 1e-6, 1e-6])
    with pytest.raises(DomainError):
        part_metric_monitor(field, u0, 2 * u0, 0.0, 1.0)


def test_ordering_is_preserved(periodic_field, rng):
    lower = rng.uniform(0.0, 1.0, 30)
    upper = lower + rng.uniform(0.0, 0.5, 30)
    _, worst = ordering_defect(periodic_field, lower, upper, 0.0, 3.0, boundary=Boundary.clamp_value(0.5))
    assert worst.max() <= 0.0
    with pytest.raises(ValueError):
        ordering_defect(periodic_field, upper, lower, 0.0, 1.0)


def test_envelope_violation_witness():
    sites = np.arange(5)
    phi = lambda t, j: np.ones(np.shape(j))  # noqa: E731
    values = np.ones((2, 5))
    values[1, 3] = 1.5
    worst, witness, ok = envelope_violation([0.0, 1.0], sites, values, phi, phi, 1.0, 0.25)
    assert not ok
    assert witness == (1.0, 3)
    assert worst == pytest.approx(0.25 / 1.25)


def test_fit_log_rate_recovers_exponent():
    sites = np.arange(10)
    assert fit_log_rate(sites, 3.0 * np.exp(-0.7 * sites)) == pytest.approx(-0.7)


def test_audit_passes_for_constructed_wave_and_fails_for_half_constant(homogeneous_wave):
    wave = homogeneous_wave
    assert audit_stability_hypotheses(wave.samples()).passed
    halved = audit_stability_hypotheses(wave.samples(d1=wave.d1_tight / 2))
    assert not halved.clause("envelope bound").passed
    assert halved.clause("envelope bound").witness is not None


@pytest.mark.parametrize("delta", [2, 4, 10])
def test_left_ratio_decays_by_tilt_gap(periodic_wave, delta):
    wave, _ = periodic_wave
    J = wave.field.space_period
    p = wave.params
    j = np.array([-20, -20 - delta * J])
    ratio = wave.phi(0.3, j) / wave.phi1(0.3, j)
    expected = math.exp((p.mu_prime - p.mu) * delta * J)
    assert ratio[0] / ratio[1] == pytest.approx(expected, rel=0.1)
