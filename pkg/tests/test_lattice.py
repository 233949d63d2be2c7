import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from lattice_kpp.coeffs import make_family
from lattice_kpp.errors import ParameterError, ResolutionError, StabilityError, UndershootError
from lattice_kpp.lattice import (
    Boundary,
    LatticeState,
    SimOptions,
    TimeGridFunction,
    check_sub_super,
    compute_entire_solution,
    default_options,
    integrate,
    lattice_defect,
    max_stable_dt,
    sanitize,
    step_count,
    trajectory,
)


def logistic(t, u0, r=1.0, a=1.0):
    e = math.exp(r * t)
    return r * u0 * e / (r + a * u0 * (e - 1.0))


@pytest.mark.parametrize("u0", [0.05, 0.5, 1.5])
def test_constant_data_follow_logistic_closed_form(homogeneous, u0):
    state = LatticeState(0, np.full(8, u0), 0.0, Boundary.periodic())
    final = integrate(state, homogeneous, 5.0, default_options(homogeneous))
    np.testing.assert_allclose(final.values, logistic(5.0, u0), rtol=1e-9)


def test_step_above_order_bound_is_rejected(homogeneous):
    state = LatticeState(0, np.full(8, 0.5), 0.0, Boundary.periodic())
    with pytest.raises(StabilityError):
        integrate(state, homogeneous, 1.0, SimOptions(dt=2 * max_stable_dt(homogeneous)))


@pytest.mark.parametrize("span,dt,n", [(1.0, 0.01, 100), (1.0, 0.3, 4), (0.005, 0.01, 1), (2.5, 0.5, 5)])
def test_step_count(span, dt, n):
    assert step_count(span, dt) == n


def test_invalid_states_and_options():
    with pytest.raises(ParameterError):
        LatticeState(0, [1.0, 2.0], 0.0, Boundary.clamp_value(0.0))
    with pytest.raises(ParameterError):
        LatticeState(0, [1.0, np.nan, 1.0], 0.0, Boundary.periodic())
    with pytest.raises(ParameterError):
        SimOptions(dt=0.0)
    with pytest.raises(ParameterError):
        SimOptions(method="euler")


def test_sanitize_clamps_round_off_and_rejects_real_undershoot():
    u = np.array([1.0, -1e-14, 0.5])
    assert sanitize(u, 0.0) == 1
    assert u[1] == 0.0
    with pytest.raises(UndershootError):
        sanitize(np.array([1.0, -1e-6]), 0.0)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(0.0, 1.5), min_size=6, max_size=16), st.floats(0.0, 0.5))
def test_comparison_principle(values, bump):
    field = make_family("time-space-periodic")
    lower = np.array(values)
    upper = lower + bump * np.linspace(0.0, 1.0, lower.size)
    bnd = Boundary.clamp_value(0.2)
    opts = default_options(field)
    lo = integrate(LatticeState(0, lower, 0.0, bnd), field, 1.0, opts)
    hi = integrate(LatticeState(0, upper, 0.0, bnd), field, 1.0, opts)
    assert np.all(hi.values >= lo.values - 1e-12)


def test_translation_by_space_period_commutes():
    field = make_family("time-space-periodic", {"J": 2})
    rng = np.random.default_rng(3)
    u0 = rng.uniform(0.0, 1.0, 12)
    opts = default_options(field)
    a = integrate(LatticeState(0, u0, 0.0, Boundary.periodic()), field, 2.0, opts)
    b = integrate(LatticeState(2, u0, 0.0, Boundary.periodic()), field, 2.0, opts)
    np.testing.assert_array_equal(a.values, b.values)


def test_trajectory_sampling(homogeneous):
    state = LatticeState(0, np.full(5, 0.3), 0.0, Boundary.periodic())
    times, frames, final = trajectory(state, homogeneous, 1.0, SimOptions(dt=0.01, output_stride=10))
    assert times.size == 11 and frames.shape == (11, 5)
    np.testing.assert_array_equal(frames[-1], final.values)


def test_periodic_logistic_entire_solution_matches_scalar_oracle():
    T, r0, r1 = 1.0, 1.5, 0.5
    field = make_family("time-periodic", {"T": T, "r0": r0, "r1": r1})
    up = compute_entire_solution(field, tol=1e-10)

    def rhs(t, u):
        return u * (r0 + r1 * np.sin(2 * np.pi * t / T) - u)

    u = np.array([field.M0])
    for _ in range(60):
        u = solve_ivp(rhs, (0.0, T), u, rtol=1e-12, atol=1e-14).y[:, -1]
    sol = solve_ivp(rhs, (0.0, T), u, rtol=1e-12, atol=1e-14, dense_output=True)
    for t in np.linspace(0.0, 3 * T, 31):
        assert float(up.value(t, 0)) == pytest.approx(float(sol.sol(t % T)[0]), abs=1e-6)
        assert float(up.value(t + T, 0)) == pytest.approx(float(up.value(t, 0)), abs=1e-12)
    assert up.inf > 0


def test_space_periodic_entire_solution_is_a_solution(periodic_field):
    up = compute_entire_solution(periodic_field, tol=1e-9)
    times = np.arange(0.0, 1.0 + 1e-9, 0.01)
    sites = np.arange(-3, 6)
    cand = TimeGridFunction.from_callable(up.value, times, sites)
    _, _, defect = lattice_defect(cand, periodic_field)
    assert np.abs(defect).max() < 1e-6
    np.testing.assert_array_equal(up.value(0.3, sites + 2), up.value(0.3, sites))


def test_time_only_entire_solution():
    field = make_family("time-only")
    up = compute_entire_solution(field, (0.0, 20.0), tol=1e-8)
    assert 0 < up.inf <= up.sup <= field.M0
    with pytest.raises(ParameterError):
        up.value(25.0, 0)


def test_constants_bracket_the_equation(homogeneous):
    times = np.arange(0.0, 1.0 + 1e-9, 0.01)
    sites = np.arange(0, 6)
    top = TimeGridFunction(times, sites, np.full((times.size, sites.size), homogeneous.M0 * 1.5))
    zero = TimeGridFunction(times, sites, np.zeros((times.size, sites.size)))
    assert check_sub_super(top, homogeneous, "super").passed
    assert check_sub_super(zero, homogeneous, "sub").passed
    small = TimeGridFunction(times, sites, np.full((times.size, sites.size), 0.5))
    assert not check_sub_super(small, homogeneous, "super").passed


def test_sub_super_check_requires_resolution(homogeneous):
    times = np.arange(0.0, 1.0 + 1e-9, 0.05)
    sites = np.arange(0, 4)
    cand = TimeGridFunction(times, sites, np.ones((times.size, sites.size)))
    with pytest.raises(ResolutionError):
        check_sub_super(cand, homogeneous, "super")
    with pytest.raises(ParameterError):
        check_sub_super(cand, homogeneous, "both")
