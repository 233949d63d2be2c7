import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize_scalar

from lattice_kpp.coeffs import make_family
from lattice_kpp.errors import ParameterError, SpectralError
from lattice_kpp.floquet import (
    find_mu_star,
    lambda_batch,
    lambda_eig_batch,
    lambda_of_mu,
    monodromy,
    mu_for_speed,
    power_iteration,
    select_mu_prime,
)


def g(mu):
    return math.exp(mu) + math.exp(-mu) - 2.0


def homogeneous_ratio(mu, d=1.0, r=1.0):
    return (d * g(mu) + r) / mu


@pytest.fixture(scope="module")
def homogeneous_speed(homogeneous):
    return find_mu_star(homogeneous)


@pytest.fixture(scope="module")
def periodic_speed(periodic_field):
    return find_mu_star(periodic_field)


@pytest.mark.parametrize("mu", [0.1, 0.5, 1.0, 2.0])
@pytest.mark.parametrize("d,r", [(1.0, 1.0), (0.5, 2.0)])
def test_homogeneous_lambda_closed_form(mu, d, r):
    field = make_family("homogeneous", {"d": d, "r": r})
    assert lambda_of_mu(field, mu).lam == pytest.approx(d * g(mu) + r, abs=1e-10)


@pytest.mark.parametrize("mu", [0.3, 1.2])
def test_time_periodic_lambda_is_averaged_rate(mu):
    field = make_family("time-periodic", {"T": 1.0, "r0": 1.5, "r1": 0.5})
    assert lambda_of_mu(field, mu).lam == pytest.approx(g(mu) + 1.5, abs=1e-9)


def test_power_iteration_matches_dense_eigensolver(periodic_field):
    mus = np.linspace(0.1, 2.5, 13)
    np.testing.assert_allclose(lambda_batch(periodic_field, mus), lambda_eig_batch(periodic_field, mus),
                               atol=1e-10)
    M = monodromy(periodic_field, 0.7)
    rho, vec, _ = power_iteration(M)
    assert float(rho) == pytest.approx(np.abs(np.linalg.eigvals(M)).max(), rel=1e-12)
    np.testing.assert_allclose(M @ vec, rho * vec, atol=1e-10 * float(rho))


def test_power_iteration_rejects_zero_matrix():
    with pytest.raises(SpectralError):
        power_iteration(np.zeros((3, 3)))


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 6), st.integers(0, 10_000))
def test_power_iteration_on_random_positive_matrices(n, seed):
    M = np.random.default_rng(seed).uniform(0.1, 2.0, (n, n))
    rho, vec, _ = power_iteration(M)
    assert float(rho) == pytest.approx(np.abs(np.linalg.eigvals(M)).max(), rel=1e-9)
    assert np.all(vec > 0) and vec.max() == pytest.approx(1.0)


def test_principal_eigenfunction_is_positive_periodic_and_resolved(periodic_field):
    res = lambda_of_mu(periodic_field, 0.8)
    assert res.psi_min > 0
    assert res.residual < 1e-6
    j = np.arange(-4, 4)
    np.testing.assert_allclose(res.value(0.3, j), res.value(1.3, j + 2), atol=1e-12)


def test_homogeneous_minimal_speed_matches_scalar_oracle(homogeneous_speed):
    oracle = minimize_scalar(homogeneous_ratio, bounds=(0.1, 3.0), method="bounded",
                             options={"xatol": 1e-12})
    assert homogeneous_speed.c_star == pytest.approx(oracle.fun, abs=1e-9)
    assert homogeneous_speed.mu_star == pytest.approx(oracle.x, abs=1e-5)
    assert abs(homogeneous_speed.grid_min - homogeneous_speed.c_star) < 1e-6


def test_minimal_speed_is_a_global_minimum_of_the_scan(periodic_speed, periodic_field):
    mus = np.linspace(0.05, 4.0, 400)
    ratio = lambda_eig_batch(periodic_field, mus) / mus
    assert ratio.min() >= periodic_speed.c_star - 1e-9


def test_mu_prime_contract(periodic_field, periodic_speed):
    mu = mu_for_speed(periodic_field, periodic_speed, periodic_speed.c_star + 0.5)
    mp = select_mu_prime(periodic_field, periodic_speed, mu)
    assert mu < mp < min(2 * mu, periodic_speed.mu_star)
    ratio = lambda_batch(periodic_field, [mu, mp]) / np.array([mu, mp])
    assert ratio[0] > ratio[1] > periodic_speed.c_star


@pytest.mark.parametrize("offset", [0.1, 0.5, 2.0])
def test_mu_for_speed_inverts_the_ratio(homogeneous, homogeneous_speed, offset):
    c = homogeneous_speed.c_star + offset
    mu = mu_for_speed(homogeneous, homogeneous_speed, c)
    assert 0 < mu < homogeneous_speed.mu_star
    assert homogeneous_ratio(mu) == pytest.approx(c, abs=1e-10)


def test_speeds_at_or_below_minimum_are_rejected(homogeneous, homogeneous_speed):
    with pytest.raises(ParameterError):
        mu_for_speed(homogeneous, homogeneous_speed, homogeneous_speed.c_star)
    with pytest.raises(ParameterError):
        select_mu_prime(homogeneous, homogeneous_speed, homogeneous_speed.mu_star * 1.1)


def test_bad_bracket(homogeneous):
    with pytest.raises(ParameterError):
        find_mu_star(homogeneous, bracket=(1.0, 0.5))
