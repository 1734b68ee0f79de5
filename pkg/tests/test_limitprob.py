import math

import numpy as np
import pytest

from weakmorse import (asymptotic_angle_numeric, asymptotic_angle_theory, index_i, index_i_lambda,
                       integrate_limit_orbit, limit_action_value, parabola_oracle,
                       transverse_count, transverse_index)
from weakmorse.exceptions import DomainError, RadiusNotReached, WindowNotCovered
from weakmorse.limitprob import sweep_point, truncated_angle


def test_index_formula_values():
    assert index_i(1.0) == 1
    assert index_i(0.5) == 1
    assert index_i(1.5) == 3
    # exact integer threshold: 2/(2 - 4/3) = 3 is not strictly below 3
    assert index_i(4.0 / 3.0) == 2
    assert index_i_lambda(1.0, 3.0) == 3
    assert index_i_lambda(1.0, 1.0) == 2


def test_lambda_zero_reduces_to_plain_index():
    for a in np.linspace(0.05, 1.95, 20):
        assert index_i_lambda(a, 0.0) == index_i(a)


def test_index_domain():
    with pytest.raises(DomainError):
        index_i(2.0)
    with pytest.raises((DomainError, ValueError)):
        index_i_lambda(1.0, -1.0)


def test_parabola_oracle_solves_the_cubic():
    s = np.linspace(-10, 10, 41)
    x, D = parabola_oracle(s)
    np.testing.assert_allclose(math.sqrt(2) * (D + D ** 3 / 3), s, atol=1e-12)
    np.testing.assert_allclose(np.linalg.norm(x, axis=1), 1 + D ** 2, rtol=1e-13)


def test_kepler_orbit_matches_parabola():
    orbit = integrate_limit_orbit(1.0, 0.0, 1.0, s_max=10.0)
    s = np.linspace(-10, 10, 401)
    x, _ = orbit.state(s)
    ref, _ = parabola_oracle(s)
    assert np.abs(x - ref).max() <= 1e-6
    assert np.abs(orbit.energy_residual()).max() <= 1e-9
    assert orbit.pericenter_norm == pytest.approx(1.0, abs=1e-14)


def test_orbit_stays_in_its_plane():
    plane = np.linalg.qr(np.random.default_rng(0).standard_normal((3, 2)))[0]
    orbit = integrate_limit_orbit(1.5, 1.0, 2.0, s_max=20.0, d=3, plane=plane)
    assert orbit.planarity_residual() < 1e-10
    with pytest.raises(WindowNotCovered):
        orbit.state(30.0)


@pytest.mark.parametrize("alpha,lam", [(1.0, 0.0), (1.0, 1.0), (1.5, 3.0)])
def test_asymptotic_angle(alpha, lam):
    orbit = integrate_limit_orbit(alpha, lam, s_max=1e30, R=1e6)
    num = asymptotic_angle_numeric(orbit, 1e6)
    assert abs(num - asymptotic_angle_theory(alpha, lam)) <= 1e-3


def test_kepler_angle_is_a_full_turn():
    assert asymptotic_angle_theory(1.0, 0.0) == pytest.approx(2 * math.pi)


def test_strong_force_orbit_is_the_unit_circle():
    orbit = integrate_limit_orbit(1.0, math.inf, 1.0, s_max=10.0)
    np.testing.assert_allclose(np.linalg.norm(orbit.xi, axis=1), 1.0, atol=1e-10)
    with pytest.raises(RadiusNotReached):
        asymptotic_angle_numeric(orbit, 10.0)


def test_transverse_count_kepler_is_one():
    rep = transverse_index(1.0, 0.0, L=200.0, mesh=4000)
    assert rep.transverse_count == 1 >= rep.i_alpha_lambda
    assert rep.transverse_block_bound == 1


def test_strong_force_counts_grow_with_window():
    counts = [transverse_count(1.0, math.inf, L, int(20 * L)) for L in (50, 100, 200)]
    assert counts[0] < counts[1] < counts[2]


def test_constant_potential_count_matches_dirichlet_spectrum():
    # on the circle W = -2: negatives of -phi'' - 2 phi on [-L, L] are k with (k pi / 2L)^2 < 2
    L = 10.0
    expected = int(np.sum((np.arange(1, 100) * math.pi / (2 * L)) ** 2 < 2.0))
    assert transverse_count(1.0, math.inf, L, 2000) == expected


def test_count_tracks_swept_angle():
    # inside [-L, L] the count equals the number of completed half-turns
    row = sweep_point(1.5, 0.0, L=200.0, mesh=4000, check_convergence=False)
    assert row["transverse_count"] == math.ceil(row["swept_angle_L"] / math.pi) - 1
    assert row["swept_angle_L"] < row["theory_angle"]


def test_truncated_angle_increases_with_window():
    a = [truncated_angle(1.0, 0.0, L) for L in (10.0, 100.0, 1000.0)]
    assert a[0] < a[1] < a[2] < 2 * math.pi


def test_limit_action_matches_closed_form():
    orbit = integrate_limit_orbit(1.0, 0.0, 1.0, s_max=5.0)
    # on the zero-energy Kepler orbit the Lagrangian is 2/r, with r = 1 + D^2
    from scipy import integrate
    ref = integrate.quad(lambda s: 2.0 / (1 + parabola_oracle(s)[1][0] ** 2), -3, 3,
                         epsabs=1e-13, epsrel=1e-13)[0]
    assert limit_action_value("I", orbit, (-3, 3)) == pytest.approx(ref, rel=1e-9)
    assert limit_action_value("I", orbit, (1, 1)) == 0.0
    with pytest.raises(WindowNotCovered):
        limit_action_value("I", orbit, (-6, 0))
    circle = integrate_limit_orbit(1.0, math.inf, 1.0, s_max=5.0)
    # J on the unit circle: |v|^2/2 + 1 = 2 per unit time
    assert limit_action_value("J", circle, (0, 2)) == pytest.approx(4.0, rel=1e-9)
