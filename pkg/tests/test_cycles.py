import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp, trapezoid

from gradplay.cycles import (
    LINEARLY_STABLE, LINEARLY_UNSTABLE, NON_HYPERBOLIC, classify_multipliers, detect_limit_cycle,
    integrate_flow, monodromy, rk4_step,
)
from gradplay.errors import InvalidParameterError
from gradplay.game import (
    Game, PolynomialCost, game_jacobian, make_quadratic_potential, make_quadratic_zero_sum,
    make_van_der_pol_game, omega,
)


def reversed_vdp(mu=1.0):
    """Costs whose flow is the time-reversed Van der Pol field: an unstable cycle."""
    f1 = PolynomialCost([(1.0, (1, 1))])
    f2 = PolynomialCost([(mu / 2, (0, 2)), (-mu / 2, (2, 2)), (-1.0, (1, 1))])
    return Game((1, 1), (f1, f2), "reversed-van-der-pol")


def test_rk4_matches_scipy():
    g = make_van_der_pol_game(1.0)
    traj = integrate_flow(g, (0.1, 0.0), 1e-3, 5000)
    ref = solve_ivp(lambda t, x: -omega(g, x), (0, 5), [0.1, 0.0], rtol=1e-11, atol=1e-12)
    assert np.allclose(traj[-1], ref.y[:, -1], atol=1e-8)


def test_rotation_conserves_radius():
    g = make_quadratic_zero_sum(0, 1, 0)
    steps = round(2 * math.pi / 1e-3)
    traj = integrate_flow(g, (1.0, 0.0), 1e-3, steps)
    r2 = np.sum(traj ** 2, axis=1)
    assert np.max(np.abs(r2 - 1)) < 1e-6


def test_monodromy_linear_flow_is_matrix_exponential():
    from scipy.linalg import expm
    g = make_quadratic_zero_sum(0.3, 1, -0.2)
    J = game_jacobian(g, (0, 0))
    _, M = monodromy(g, (0.5, 0.2), 1.7, 1e-3)
    assert np.allclose(M, expm(-1.7 * J), atol=1e-10)


def test_van_der_pol_cycle():
    r = detect_limit_cycle(make_van_der_pol_game(1.0), (0.1, 0.0))
    assert r is not None
    assert r.period_estimate == pytest.approx(6.6633, abs=0.005)
    assert r.classification == LINEARLY_STABLE
    assert abs(r.trivial_multiplier - 1) < 1e-3
    assert all(abs(m) < 1 for m in r.nontrivial_multipliers)


def test_van_der_pol_multiplier_matches_divergence_integral():
    # in the plane the nontrivial multiplier is exp(∫ div f dt) over one period
    g = make_van_der_pol_game(1.0)
    r = detect_limit_cycle(g, (0.1, 0.0))
    T = r.period_estimate
    steps = 20_000
    traj = integrate_flow(g, r.anchor_point, T / steps, steps)
    div = np.array([np.trace(-game_jacobian(g, x)) for x in traj])
    integral = trapezoid(div, dx=T / steps)
    assert abs(r.nontrivial_multipliers[0]) == pytest.approx(math.exp(integral), rel=1e-3)


def test_rotation_cycle_non_hyperbolic():
    r = detect_limit_cycle(make_quadratic_zero_sum(0, 1, 0), (1.0, 0.0))
    assert r is not None
    assert r.period_estimate == pytest.approx(2 * math.pi, abs=0.01)
    assert r.classification == NON_HYPERBOLIC
    assert abs(r.trivial_multiplier - 1) < 1e-3


def test_unstable_cycle_classified():
    # the reversed cycle repels, so the search starts on it with no transient
    fwd = detect_limit_cycle(make_van_der_pol_game(1.0), (0.1, 0.0))
    r = detect_limit_cycle(reversed_vdp(), fwd.anchor_point, transient=0.0, t_max=20.0)
    assert r is not None
    assert r.period_estimate == pytest.approx(fwd.period_estimate, abs=1e-3)
    assert r.classification == LINEARLY_UNSTABLE


@settings(max_examples=15)
@given(st.floats(0.2, 3), st.floats(-0.9, 0.9), st.floats(0.2, 3),
       st.floats(-2, 2), st.floats(-2, 2))
def test_no_cycle_in_potential_games(a, rho, c, x1, x2):
    b = rho * math.sqrt(a * c)
    assert detect_limit_cycle(make_quadratic_potential(a, b, c), (x1, x2), t_max=60.0, transient=10.0) is None


def test_no_cycle_for_saddle_potential():
    assert detect_limit_cycle(make_quadratic_potential(1, 2, 1), (0.3, -0.1)) is None
    assert detect_limit_cycle(make_quadratic_potential(1, 2, 1), (0.0, 0.0)) is None


def test_classify_multipliers():
    assert classify_multipliers([1.0, 0.5]) == (1.0, LINEARLY_STABLE)
    assert classify_multipliers([1.0002, 1.5])[1] == LINEARLY_UNSTABLE
    assert classify_multipliers([1.0, 0.9999])[1] == NON_HYPERBOLIC
    assert classify_multipliers([0.2, 1.0, 0.3 + 0.2j, 0.3 - 0.2j])[1] == LINEARLY_STABLE


def test_report_json():
    r = detect_limit_cycle(make_van_der_pol_game(1.0), (0.1, 0.0))
    d = json.loads(r.to_json())
    assert d["classification"] == "linearly_stable"
    assert len(d["characteristic_multipliers"]) == 2


def test_validation():
    g = make_van_der_pol_game(1.0)
    with pytest.raises(InvalidParameterError):
        detect_limit_cycle(g, (0.1, 0), dt=0)
    with pytest.raises(InvalidParameterError):
        detect_limit_cycle(g, (0.1, 0), t_max=10, transient=20)
