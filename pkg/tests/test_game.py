import json
import warnings

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, strategies as st

from gradplay.errors import DimensionError, InvalidParameterError
from gradplay.game import (
    FAMILIES, Game, PolynomialCost, StepSizeWarning, StrategyProfile, eval_cost,
    finite_difference_check, game_from_dict, game_from_json, game_jacobian, game_to_dict,
    game_to_json, make_family, make_morse_smale_chain, make_quadratic_general_sum,
    make_quadratic_potential, make_quadratic_zero_sum, make_van_der_pol_game, omega,
    parse_game_spec, parse_params,
)

finite = st.floats(-5, 5, allow_nan=False, allow_infinity=False)


def all_families():
    return [
        make_quadratic_general_sum(1, 1, -1, -0.5),
        make_quadratic_general_sum(0.3, -2, 1.7, 0.9),
        make_quadratic_zero_sum(2, 2, 1),
        make_quadratic_zero_sum(0, 1, 0),
        make_quadratic_potential(1, 2, 1),
        make_morse_smale_chain(2),
        make_morse_smale_chain(3),
        make_morse_smale_chain(5),
        make_van_der_pol_game(1.0),
        make_van_der_pol_game(2.5),
    ]


def sympy_oracle(game, x):
    """Independent symbolic differentiation of the same cost polynomials."""
    xs = sp.symbols(f"x0:{game.m}")
    fs = [sum(sp.Float(c) * sp.Mul(*[v ** int(e) for v, e in zip(xs, ex)]) for c, ex in f.terms)
          for f in game.costs]
    w = []
    for i in range(game.n):
        for k in range(game.offsets[i], game.offsets[i + 1]):
            w.append(sp.diff(fs[i], xs[k]))
    J = sp.Matrix([[sp.diff(wr, v) for v in xs] for wr in w])
    sub = dict(zip(xs, x))
    return (np.array([float(e.subs(sub)) for e in w]),
            np.array(J.subs(sub).tolist(), dtype=float))


# --- StrategyProfile ---------------------------------------------------------

def test_profile_slices_reconstruct_values():
    p = StrategyProfile(np.arange(6.0), (1, 3, 2))
    assert np.array_equal(np.concatenate([p.slice(i) for i in range(3)]), p.values)
    assert np.array_equal(p.slice(1), [1.0, 2.0, 3.0])
    assert np.array_equal(p.others(1), [0.0, 4.0, 5.0])


def test_profile_rejects_bad_dims():
    with pytest.raises(DimensionError):
        StrategyProfile(np.zeros(3), (1, 1))


@given(st.lists(st.integers(1, 4), min_size=2, max_size=5))
def test_profile_slicing_partitions(dims):
    v = np.arange(float(sum(dims)))
    p = StrategyProfile(v, tuple(dims))
    assert np.array_equal(np.concatenate([p.slice(i) for i in range(len(dims))]), v)


# --- PolynomialCost ------------------------------------------------------------

def test_polynomial_constant_terms_at_zero():
    f = PolynomialCost([(2.5, (0, 0)), (-1.0, (0, 0)), (3.0, (1, 2))])
    assert f(np.zeros(2)) == 1.5


def test_polynomial_rejects_negative_exponent():
    with pytest.raises(InvalidParameterError):
        PolynomialCost([(1.0, (-1, 0))])


def test_polynomial_power_rule():
    f = PolynomialCost([(3.0, (2, 1))])  # 3 x^2 y
    d0 = f.derivative(0)
    assert list(d0.terms) == [(6.0, (1, 1))]
    assert d0(np.array([2.0, 5.0])) == 60.0


# --- evaluation examples -------------------------------------------------------

def test_eval_cost_examples():
    g = make_quadratic_general_sum(1, 1, -1, -0.5)
    assert eval_cost(g, 0, (0, 0)) == 0.0
    assert eval_cost(g, 0, (2, 1)) == 4.0
    assert eval_cost(make_quadratic_zero_sum(2, 2, 1), 1, (1, 1)) == -3.5


def test_dimension_mismatch_is_explicit():
    g = make_quadratic_potential(1, 2, 1)
    for fn in (lambda: eval_cost(g, 0, (1, 2, 3)), lambda: omega(g, (1,)),
               lambda: game_jacobian(g, np.zeros(3))):
        with pytest.raises(DimensionError):
            fn()
    with pytest.raises(InvalidParameterError):
        eval_cost(g, 2, (0, 0))


def test_omega_examples():
    for g in all_families()[:5]:
        assert np.array_equal(omega(g, (0.0, 0.0)), [0.0, 0.0])
    assert np.array_equal(omega(make_quadratic_potential(1, 2, 1), (1, 1)), [3.0, 3.0])
    assert np.allclose(omega(make_morse_smale_chain(3), (1, 0.5, -0.2)), [0.5, -0.2, 0.0])


def test_jacobian_examples():
    assert np.array_equal(game_jacobian(make_quadratic_general_sum(1, 2, 3, 4), (7, -3)),
                          [[1, 2], [3, 4]])
    assert np.array_equal(game_jacobian(make_quadratic_zero_sum(2, 3, 5), (1, 1)),
                          [[2, 3], [-3, -5]])
    assert np.array_equal(game_jacobian(make_morse_smale_chain(3), (1, 0, 0)),
                          [[0, 1, 0], [0, 0, 1], [2, 0, 0]])


def test_family_constructor_examples():
    ev = np.sort_complex(np.linalg.eigvals(game_jacobian(make_quadratic_general_sum(1, 1, -1, -0.5), (0, 0))))
    assert np.allclose(ev, [0.25 - 0.6614378j, 0.25 + 0.6614378j], atol=1e-6)
    assert np.allclose(np.sort(np.linalg.eigvals(game_jacobian(make_quadratic_general_sum(1, 2, 2, 1), (0, 0))).real), [-1, 3])
    assert np.array_equal(game_jacobian(make_quadratic_general_sum(1, 0, 0, 1), (0, 0)), np.eye(2))
    assert np.array_equal(game_jacobian(make_quadratic_zero_sum(0, 1, 0), (0, 0)), [[0, 1], [-1, 0]])
    assert np.array_equal(game_jacobian(make_quadratic_potential(1, 0, 1), (0, 0)), np.eye(2))


def test_chain_two_players():
    g = make_morse_smale_chain(2)
    assert np.allclose(omega(g, (3.0, 4.0)), [4.0, 8.0])
    assert np.allclose(omega(g, (1.0, 0.0)), 0) and np.allclose(omega(g, (-1.0, 0.0)), 0)


def test_van_der_pol_field():
    g = make_van_der_pol_game(1.0)
    assert np.array_equal(omega(g, (0, 0)), [0, 0])
    assert np.allclose(-omega(g, (2, 1)), [1, -5])
    assert np.allclose(game_jacobian(g, (0, 0)), [[0, -1], [1, -1]])
    # trace of the flow Jacobian is mu > 0: unstable focus
    assert np.trace(-game_jacobian(g, (0, 0))) == pytest.approx(1.0)


@pytest.mark.parametrize("bad", [lambda: make_morse_smale_chain(1), lambda: make_van_der_pol_game(0.0),
                                 lambda: make_van_der_pol_game(-1.0)])
def test_family_preconditions(bad):
    with pytest.raises(InvalidParameterError):
        bad()


# --- derivative oracles ------------------------------------------------------

@pytest.mark.parametrize("game", all_families(), ids=lambda g: g.label)
def test_symbolic_oracle(game):
    rng = np.random.default_rng(11)
    for _ in range(3):
        x = rng.uniform(-2, 2, game.m)
        w, J = sympy_oracle(game, x)
        assert np.allclose(omega(game, x), w, rtol=1e-12, atol=1e-12)
        assert np.allclose(game_jacobian(game, x), J, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("game", all_families(), ids=lambda g: g.label)
def test_finite_difference_exactness(game):
    rng = np.random.default_rng(5)
    for _ in range(100):
        ge, je = finite_difference_check(game, rng.uniform(-2, 2, game.m))
        assert ge < 1e-6 and je < 1e-6


def test_finite_difference_examples():
    assert max(finite_difference_check(make_quadratic_potential(1, 2, 1), (0.3, -0.7), 1e-5)) < 1e-6
    assert max(finite_difference_check(make_morse_smale_chain(3), (1, 1, 1), 1e-5)) < 1e-6


def test_finite_difference_degenerate_step_warns():
    with pytest.warns(StepSizeWarning):
        ge, je = finite_difference_check(make_quadratic_potential(1, 2, 1), (1e8, 1.0), 1e-12)
    assert np.isnan(ge) and np.isnan(je)
    with pytest.raises(InvalidParameterError):
        finite_difference_check(make_quadratic_potential(1, 2, 1), (0, 0), 0.0)


# --- structural properties ---------------------------------------------------

@given(finite, finite, finite, finite, finite)
def test_zero_sum_antisymmetric_blocks(a, b, c, x1, x2):
    J = game_jacobian(make_quadratic_zero_sum(a, b, c), (x1, x2))
    assert J[1, 0] == -J[0, 1]


@given(finite, finite, finite, finite, finite)
def test_potential_jacobian_symmetric(a, b, c, x1, x2):
    J = game_jacobian(make_quadratic_potential(a, b, c), (x1, x2))
    assert np.array_equal(J, J.T)


@given(finite, finite, finite, finite, finite, finite, finite, finite)
def test_quadratic_jacobian_constant(a, b, c, d, x1, x2, y1, y2):
    for g in (make_quadratic_general_sum(a, b, c, d), make_quadratic_zero_sum(a, b, c),
              make_quadratic_potential(a, b, c)):
        assert np.array_equal(game_jacobian(g, (x1, x2)), game_jacobian(g, (y1, y2)))
        assert np.array_equal(omega(g, (0.0, 0.0)), [0.0, 0.0])


def test_batch_matches_single():
    g = make_morse_smale_chain(4)
    X = np.random.default_rng(0).normal(size=(7, 4))
    W, J = omega(g, X), game_jacobian(g, X)
    for k in range(7):
        assert np.array_equal(W[k], omega(g, X[k]))
        assert np.array_equal(J[k], game_jacobian(g, X[k]))


def test_game_validation():
    f = PolynomialCost([(1.0, (2, 0))])
    with pytest.raises(InvalidParameterError):
        Game((1,), (f,))
    with pytest.raises((InvalidParameterError, DimensionError)):
        Game((1, 1, 1), (f, f, f))


# --- specs and serialization -------------------------------------------------

def test_parse_params_and_specs():
    assert parse_params("a=2, b=2,c=1") == {"a": 2.0, "b": 2.0, "c": 1.0}
    g = parse_game_spec("zero-sum-quadratic:a=2,b=2,c=1")
    assert g.label == "zero-sum-quadratic:a=2,b=2,c=1"
    assert np.array_equal(game_jacobian(g, (0, 0)), [[2, 2], [-2, -1]])
    assert set(FAMILIES) >= {"general-sum-quadratic", "zero-sum-quadratic", "potential-quadratic",
                             "morse-smale-chain", "van-der-pol"}


@pytest.mark.parametrize("text,token", [("a=1,b2,c=3", "b2"), ("a=1,=2", "=2"), ("a=x", "a=x")])
def test_malformed_params_name_token(text, token):
    with pytest.raises(InvalidParameterError, match=token):
        parse_params(text)


def test_family_errors():
    with pytest.raises(InvalidParameterError, match="unknown"):
        make_family("nope", "")
    with pytest.raises(InvalidParameterError, match="missing"):
        make_family("potential-quadratic", "a=1,b=2")
    with pytest.raises(InvalidParameterError):
        make_family("morse-smale-chain", "n=2.5")


@pytest.mark.parametrize("game", all_families(), ids=lambda g: g.label)
def test_json_round_trip(game):
    data = json.loads(game_to_json(game))
    assert set(data) == {"dims", "costs", "label"}
    assert all(set(t) == {"coef", "exp"} for c in data["costs"] for t in c)
    back = game_from_json(game_to_json(game))
    x = np.linspace(-1, 1, game.m)
    assert back.label == game.label and back.dims == game.dims
    assert np.array_equal(omega(back, x), omega(game, x))
    assert game_to_dict(game_from_dict(game_to_dict(game))) == game_to_dict(game)
