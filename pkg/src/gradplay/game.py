"""Continuous games with polynomial costs.

A game holds one polynomial cost per player over the joint strategy
``x = (x_1, ..., x_n)``.  The simultaneous gradient ``omega`` stacks each
player's derivative of their own cost with respect to their own block, and
``game_jacobian`` is its (generally non-symmetric) Jacobian.  Derivatives are
taken term-by-term with the power rule, so both are exact.

Players are indexed from 0.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionError, InvalidParameterError


class StepSizeWarning(UserWarning):
    """A finite-difference step was too small to perturb the point."""


@dataclass(frozen=True)
class StrategyProfile:
    """Joint strategy with per-player slicing."""

    values: np.ndarray
    dims: tuple[int, ...]

    def __post_init__(self):
        values = np.array(self.values, dtype=float).reshape(-1)
        values.setflags(write=False)
        dims = tuple(int(d) for d in self.dims)
        if any(d < 1 for d in dims) or sum(dims) != values.size:
            raise DimensionError(
                f"dims {dims} do not partition a vector of length {values.size}"
            )
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "dims", dims)

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.dims)])

    def slice(self, i: int) -> np.ndarray:
        lo, hi = self.offsets[i], self.offsets[i + 1]
        return self.values[lo:hi]

    def others(self, i: int) -> np.ndarray:
        lo, hi = self.offsets[i], self.offsets[i + 1]
        return np.concatenate([self.values[:lo], self.values[hi:]])

    def __len__(self):
        return self.values.size


class PolynomialCost:
    """Multivariate polynomial ``sum_k c_k prod_j x_j**e_kj``.

    Evaluation broadcasts over leading batch axes of ``x``.
    """

    __slots__ = ("coefs", "exps")

    def __init__(self, terms: Iterable[tuple[float, Sequence[int]]], nvars: int | None = None):
        terms = list(terms)
        if terms:
            coefs = np.array([float(c) for c, _ in terms])
            exps = np.array([list(e) for _, e in terms], dtype=np.int64)
            if exps.ndim != 2:
                raise InvalidParameterError("exponent vectors must all have the same length")
            if nvars is not None and exps.shape[1] != nvars:
                raise DimensionError(f"exponent vectors have length {exps.shape[1]}, expected {nvars}")
        else:
            if nvars is None:
                raise InvalidParameterError("nvars is required for an empty polynomial")
            coefs = np.zeros(0)
            exps = np.zeros((0, nvars), dtype=np.int64)
        if np.any(exps < 0):
            raise InvalidParameterError("exponents must be non-negative")
        coefs.setflags(write=False)
        exps.setflags(write=False)
        object.__setattr__(self, "coefs", coefs)
        object.__setattr__(self, "exps", exps)

    def __setattr__(self, name, value):
        raise AttributeError("PolynomialCost is immutable")

    @property
    def nvars(self) -> int:
        return self.exps.shape[1]

    @property
    def terms(self) -> list[tuple[float, tuple[int, ...]]]:
        return [(float(c), tuple(int(v) for v in e)) for c, e in zip(self.coefs, self.exps)]

    def __call__(self, x) -> np.ndarray | float:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.nvars:
            raise DimensionError(f"expected {self.nvars} coordinates, got {x.shape[-1]}")
        if self.coefs.size == 0:
            return np.zeros(x.shape[:-1])[()] if x.ndim > 1 else 0.0
        mono = np.prod(x[..., None, :] ** self.exps, axis=-1)
        out = np.sum(self.coefs * mono, axis=-1)
        return out if x.ndim > 1 else float(out)

    def derivative(self, k: int) -> "PolynomialCost":
        keep = self.exps[:, k] > 0
        coefs = self.coefs[keep] * self.exps[keep, k]
        exps = self.exps[keep].copy()
        exps[:, k] -= 1
        return PolynomialCost(zip(coefs, exps), nvars=self.nvars)

    def __neg__(self) -> "PolynomialCost":
        return PolynomialCost(((-c, e) for c, e in self.terms), nvars=self.nvars)

    def __repr__(self):
        return f"PolynomialCost({self.terms!r})"


class _StackedPolynomials:
    # Several polynomials flattened into one term table so a single
    # monomial pass evaluates all of them.
    def __init__(self, polys: Sequence[PolynomialCost], nvars: int):
        coefs, exps, starts = [], [], []
        for p in polys:
            starts.append(sum(len(c) for c in coefs))
            if p.coefs.size == 0:
                coefs.append(np.zeros(1))
                exps.append(np.zeros((1, nvars), dtype=np.int64))
            else:
                coefs.append(p.coefs)
                exps.append(p.exps)
        self.coefs = np.concatenate(coefs)
        self.exps = np.concatenate(exps)
        self.starts = np.array(starts)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        mono = np.prod(x[..., None, :] ** self.exps, axis=-1)
        return np.add.reduceat(self.coefs * mono, self.starts, axis=-1)


@dataclass(frozen=True, eq=False)
class Game:
    """n-player game, one polynomial cost per player over the joint variable."""

    dims: tuple[int, ...]
    costs: tuple[PolynomialCost, ...]
    label: str = "custom"
    _omega: _StackedPolynomials = field(init=False, repr=False)
    _jac: _StackedPolynomials = field(init=False, repr=False)
    _omega_polys: tuple = field(init=False, repr=False)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        costs = tuple(self.costs)
        if len(dims) < 2:
            raise InvalidParameterError("a game needs at least two players")
        if len(costs) != len(dims):
            raise InvalidParameterError(f"{len(dims)} players but {len(costs)} costs")
        m = sum(dims)
        for i, c in enumerate(costs):
            if c.nvars != m:
                raise DimensionError(f"cost {i} is over {c.nvars} variables, game dimension is {m}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "costs", costs)

        owner = np.repeat(np.arange(len(dims)), dims)
        omega_polys = tuple(costs[owner[r]].derivative(r) for r in range(m))
        jac_polys = [omega_polys[r].derivative(c) for r in range(m) for c in range(m)]
        object.__setattr__(self, "_omega_polys", omega_polys)
        object.__setattr__(self, "_omega", _StackedPolynomials(omega_polys, m))
        object.__setattr__(self, "_jac", _StackedPolynomials(jac_polys, m))

    @property
    def n(self) -> int:
        return len(self.dims)

    @property
    def m(self) -> int:
        return sum(self.dims)

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.dims)])

    def block(self, i: int) -> slice:
        off = self.offsets
        return slice(int(off[i]), int(off[i + 1]))

    def profile(self, values) -> StrategyProfile:
        return StrategyProfile(values, self.dims)

    def __repr__(self):
        return f"Game(label={self.label!r}, dims={self.dims})"


def _values(game: Game, x) -> np.ndarray:
    if isinstance(x, StrategyProfile):
        if x.dims != game.dims:
            raise DimensionError(f"profile dims {x.dims} do not match game dims {game.dims}")
        return x.values
    v = np.asarray(x, dtype=float)
    if v.shape[-1:] != (game.m,):
        raise DimensionError(f"expected {game.m} coordinates, got shape {v.shape}")
    return v


def eval_cost(game: Game, player: int, x) -> float:
    if not 0 <= player < game.n:
        raise InvalidParameterError(f"player {player} out of range for {game.n} players")
    return game.costs[player](_values(game, x))


def omega(game: Game, x) -> np.ndarray:
    """Simultaneous gradient ``(D_1 f_1, ..., D_n f_n)`` at ``x``.

    ``x`` may carry leading batch axes.
    """
    return game._omega(_values(game, x))


def game_jacobian(game: Game, x) -> np.ndarray:
    """Jacobian of ``omega``; entry ``(r, c)`` is ``d omega_r / d x_c``."""
    v = _values(game, x)
    return game._jac(v).reshape(v.shape[:-1] + (game.m, game.m))


# --- built-in families -----------------------------------------------------

def _mono(m: int, **powers: int) -> tuple[int, ...]:
    e = [0] * m
    for k, p in powers.items():
        e[int(k[1:]) - 1] = p
    return tuple(e)


def make_quadratic_general_sum(a: float, b: float, c: float, d: float) -> Game:
    """f_1 = (a/2) x_1^2 + b x_1 x_2,  f_2 = (d/2) x_2^2 + c x_1 x_2."""
    f1 = PolynomialCost([(a / 2, (2, 0)), (b, (1, 1))])
    f2 = PolynomialCost([(d / 2, (0, 2)), (c, (1, 1))])
    return Game((1, 1), (f1, f2), f"general-sum-quadratic:a={a:g},b={b:g},c={c:g},d={d:g}")


def make_quadratic_zero_sum(a: float, b: float, c: float) -> Game:
    """Players hold ``(f, -f)`` with f = (a/2) x_1^2 + b x_1 x_2 + (c/2) x_2^2."""
    f = PolynomialCost([(a / 2, (2, 0)), (b, (1, 1)), (c / 2, (0, 2))])
    return Game((1, 1), (f, -f), f"zero-sum-quadratic:a={a:g},b={b:g},c={c:g}")


def make_quadratic_potential(a: float, b: float, c: float) -> Game:
    """Both players hold f = (a/2) x_1^2 + b x_1 x_2 + (c/2) x_2^2."""
    f = PolynomialCost([(a / 2, (2, 0)), (b, (1, 1)), (c / 2, (0, 2))])
    return Game((1, 1), (f, f), f"potential-quadratic:a={a:g},b={b:g},c={c:g}")


def make_morse_smale_chain(n: int) -> Game:
    """Scalar chain game f_i = x_i x_{i+1}, f_n = x_n (x_1^2 - 1).

    The resulting field is ``omega = (x_2, ..., x_n, x_1^2 - 1)``.
    """
    if int(n) != n or n < 2:
        raise InvalidParameterError(f"chain game needs n >= 2, got {n}")
    n = int(n)
    costs = []
    for i in range(n - 1):
        e = [0] * n
        e[i] = e[i + 1] = 1
        costs.append(PolynomialCost([(1.0, e)]))
    hi = [0] * n
    hi[0], hi[-1] = 2, 1
    lo = [0] * n
    lo[-1] = 1
    costs.append(PolynomialCost([(1.0, hi), (-1.0, lo)]))
    return Game((1,) * n, tuple(costs), f"morse-smale-chain:n={n}")


def make_van_der_pol_game(mu: float) -> Game:
    """Two-player game whose gradient flow ``-omega`` is the Van der Pol field.

    f_1 = -x_1 x_2 and f_2 = -(mu/2) x_2^2 + (mu/2) x_1^2 x_2^2 + x_1 x_2, so
    ``-omega(x) = (x_2, mu (1 - x_1^2) x_2 - x_1)``.
    """
    if not mu > 0:
        raise InvalidParameterError(f"mu must be positive, got {mu}")
    f1 = PolynomialCost([(-1.0, (1, 1))])
    f2 = PolynomialCost([(-mu / 2, (0, 2)), (mu / 2, (2, 2)), (1.0, (1, 1))])
    return Game((1, 1), (f1, f2), f"van-der-pol:mu={mu:g}")


FAMILIES = {
    "general-sum-quadratic": (make_quadratic_general_sum, ("a", "b", "c", "d")),
    "zero-sum-quadratic": (make_quadratic_zero_sum, ("a", "b", "c")),
    "potential-quadratic": (make_quadratic_potential, ("a", "b", "c")),
    "morse-smale-chain": (make_morse_smale_chain, ("n",)),
    "van-der-pol": (make_van_der_pol_game, ("mu",)),
}


def parse_params(text: str) -> dict[str, float]:
    """Parse ``"a=1,b=2"`` into a dict; a malformed token raises with its text."""
    out = {}
    if not text.strip():
        return out
    for token in text.split(","):
        key, sep, val = token.partition("=")
        key = key.strip()
        if not sep or not key:
            raise InvalidParameterError(f"malformed parameter token {token!r}")
        try:
            out[key] = float(val)
        except ValueError:
            raise InvalidParameterError(f"malformed parameter token {token!r}") from None
    return out


def make_family(name: str, params: dict[str, float] | str) -> Game:
    if name not in FAMILIES:
        raise InvalidParameterError(f"unknown game family {name!r}; known: {sorted(FAMILIES)}")
    if isinstance(params, str):
        params = parse_params(params)
    ctor, names = FAMILIES[name]
    missing = [k for k in names if k not in params]
    extra = [k for k in params if k not in names]
    if missing or extra:
        raise InvalidParameterError(
            f"family {name!r} takes parameters {names}; missing {missing}, unexpected {extra}"
        )
    args = [params[k] for k in names]
    if name == "morse-smale-chain":
        if args[0] != int(args[0]):
            raise InvalidParameterError(f"n must be an integer, got {args[0]}")
        args = [int(args[0])]
    return ctor(*args)


def parse_game_spec(spec: str) -> Game:
    """Build a game from ``"family:k=v,..."``."""
    name, _, params = spec.partition(":")
    return make_family(name.strip(), params)


def game_to_dict(game: Game) -> dict:
    return {
        "dims": list(game.dims),
        "costs": [
            [{"coef": c, "exp": list(e)} for c, e in cost.terms] for cost in game.costs
        ],
        "label": game.label,
    }


def game_from_dict(data: dict) -> Game:
    try:
        dims = [int(d) for d in data["dims"]]
        m = sum(dims)
        costs = [
            PolynomialCost([(t["coef"], t["exp"]) for t in cost], nvars=m)
            for cost in data["costs"]
        ]
    except (KeyError, TypeError) as exc:
        raise InvalidParameterError(f"malformed game JSON: {exc}") from None
    return Game(tuple(dims), tuple(costs), data.get("label", "custom"))


def game_to_json(game: Game) -> str:
    return json.dumps(game_to_dict(game))


def game_from_json(text: str) -> Game:
    return game_from_dict(json.loads(text))


def finite_difference_check(game: Game, x, h: float = 1e-5) -> tuple[float, float]:
    """Compare exact derivatives against central differences.

    Returns ``(gradient_error, jacobian_error)``, each the max absolute
    discrepancy scaled by ``max(1, max |exact|)``.  If ``h`` does not move
    some coordinate of ``x`` a :class:`StepSizeWarning` is issued and both
    errors are NaN.
    """
    if not h > 0:
        raise InvalidParameterError(f"h must be positive, got {h}")
    v = np.array(_values(game, x), dtype=float)
    if np.any(v + h == v) or np.any(v - h == v):
        warnings.warn(f"step h={h:g} does not perturb x; no finite differences taken",
                      StepSizeWarning, stacklevel=2)
        return float("nan"), float("nan")

    m = game.m
    owner = np.repeat(np.arange(game.n), game.dims)
    fd_grad = np.empty(m)
    fd_jac = np.empty((m, m))
    for k in range(m):
        e = np.zeros(m)
        e[k] = h
        fd_grad[k] = (game.costs[owner[k]](v + e) - game.costs[owner[k]](v - e)) / (2 * h)
        fd_jac[:, k] = (omega(game, v + e) - omega(game, v - e)) / (2 * h)

    w = omega(game, v)
    J = game_jacobian(game, v)
    grad_err = np.max(np.abs(w - fd_grad)) / max(1.0, np.max(np.abs(w)))
    jac_err = np.max(np.abs(J - fd_jac)) / max(1.0, np.max(np.abs(J)))
    return float(grad_err), float(jac_err)
