"""Deterministic and stochastic gradient-play.

Deterministic play iterates ``x <- x - gamma (.) omega(x)`` where player i's
rate multiplies player i's block.  Stochastic play iterates
``x <- x - gamma_t (omega(x) + w)`` with a common step schedule and
zero-mean noise.

All simulators share one batched engine, so a Monte-Carlo experiment over
many trials runs the same arithmetic as a single trajectory.  Each trial's
noise is drawn up front from its own seeded generator, which makes a trial's
path independent of how many other trials run beside it.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np
from scipy.special import gammaln

from .equilibria import classify
from .errors import InvalidParameterError
from .game import Game, StrategyProfile, _values, omega


class Status(str, Enum):
    CONVERGED = "converged"
    ESCAPED = "escaped"
    MAX_ITERS = "max_iters"
    DIVERGED = "diverged"


_STATUSES = list(Status)
_CODE = {s: k for k, s in enumerate(_STATUSES)}


@dataclass(frozen=True)
class LearningRates:
    """Per-player constant step sizes, optionally checked against ``gamma_i < 1/L``."""

    per_player: tuple[float, ...]
    lipschitz_bound: float | None = None

    def __post_init__(self):
        rates = tuple(float(g) for g in np.atleast_1d(self.per_player))
        if not rates or any(not g > 0 for g in rates):
            raise InvalidParameterError(f"learning rates must be positive, got {rates}")
        if self.lipschitz_bound is not None:
            L = float(self.lipschitz_bound)
            if not L > 0:
                raise InvalidParameterError("lipschitz_bound must be positive")
            if max(rates) >= 1.0 / L:
                raise InvalidParameterError(
                    f"max rate {max(rates):g} violates gamma_i < 1/L = {1.0 / L:g}"
                )
        object.__setattr__(self, "per_player", rates)

    @classmethod
    def uniform(cls, gamma: float, n: int, lipschitz_bound=None) -> "LearningRates":
        return cls((gamma,) * n, lipschitz_bound)

    def expand(self, game: Game) -> np.ndarray:
        if len(self.per_player) != game.n:
            raise InvalidParameterError(
                f"{len(self.per_player)} rates for a {game.n}-player game"
            )
        return np.repeat(self.per_player, game.dims)


def lipschitz_estimate(game: Game, points) -> float:
    """Largest spectral norm of ``D omega`` over the given points."""
    from .game import game_jacobian

    return max(np.linalg.norm(game_jacobian(game, p), 2) for p in points)


@dataclass(frozen=True)
class StepSchedule:
    """``gamma_t = c1`` (constant) or ``c1 / t**eta`` (power), t = 1, 2, ..."""

    kind: str = "power"
    c1: float = 1.0
    c2: float | None = None
    eta: float = 0.75

    def __post_init__(self):
        if self.kind not in ("constant", "power"):
            raise InvalidParameterError(f"unknown schedule kind {self.kind!r}")
        if not self.c1 > 0:
            raise InvalidParameterError("c1 must be positive")
        c2 = self.c1 if self.c2 is None else float(self.c2)
        object.__setattr__(self, "c2", c2)
        if self.kind == "power":
            if not 0.5 < self.eta <= 1.0:
                raise InvalidParameterError(f"eta must lie in (1/2, 1], got {self.eta}")
            if not self.c1 <= c2:
                raise InvalidParameterError("need 0 < c1 <= c2")

    def __call__(self, t) -> np.ndarray | float:
        t = np.asarray(t, dtype=float)
        if np.any(t < 1):
            raise InvalidParameterError("schedule is indexed from t = 1")
        out = np.full(t.shape, self.c1) if self.kind == "constant" else self.c1 / t ** self.eta
        return out if out.ndim else float(out)


def _sphere_abs_moment(k: int) -> float:
    # E|u_1| for u uniform on the unit sphere in R^k
    return math.exp(gammaln(k / 2) - gammaln((k + 1) / 2)) / math.sqrt(math.pi)


@dataclass(frozen=True)
class NoiseModel:
    """Per-step gradient noise.

    ``isotropic_gaussian``: each coordinate N(0, scale^2).
    ``uniform_sphere``: each player's block uniform on the sphere of radius ``scale``.
    ``one_point_bandit``: the gradient is replaced by the single-query
    estimate of the ``delta``-smoothed cost (``scale`` unused).
    """

    kind: str = "isotropic_gaussian"
    scale: float = 0.0
    delta: float = 0.01

    def __post_init__(self):
        if self.kind not in ("isotropic_gaussian", "uniform_sphere", "one_point_bandit"):
            raise InvalidParameterError(f"unknown noise kind {self.kind!r}")
        if self.scale < 0:
            raise InvalidParameterError("noise scale must be non-negative")
        if self.kind == "one_point_bandit" and not self.delta > 0:
            raise InvalidParameterError("delta must be positive")

    def excitation_bound(self, dim: int = 1) -> float | None:
        """Lower bound on ``E[(w . v)^+]`` over unit ``v`` in a block of size ``dim``."""
        if self.kind == "isotropic_gaussian":
            return self.scale / math.sqrt(2 * math.pi)
        if self.kind == "uniform_sphere":
            return self.scale * _sphere_abs_moment(dim) / 2
        return None

    def draw(self, rng: np.random.Generator, steps: int, dims) -> np.ndarray:
        """Noise (or bandit directions) for ``steps`` iterations, shape ``(steps, m)``."""
        m = sum(dims)
        z = rng.standard_normal((steps, m))
        if self.kind == "isotropic_gaussian":
            return self.scale * z
        # unit directions per player block
        off = np.concatenate([[0], np.cumsum(dims)])
        for lo, hi in zip(off[:-1], off[1:]):
            z[:, lo:hi] /= np.linalg.norm(z[:, lo:hi], axis=1, keepdims=True)
        return self.scale * z if self.kind == "uniform_sphere" else z


@dataclass
class Trajectory:
    points: np.ndarray
    times: np.ndarray
    status: Status
    iterations: int
    seed: int | None = None
    config: dict = field(default_factory=dict)

    @property
    def final(self) -> np.ndarray:
        return self.points[-1]

    def to_csv(self, path) -> None:
        m = self.points.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"x_{k + 1}" for k in range(m)])
            for t, p in zip(self.times, self.points):
                w.writerow([int(t)] + [repr(float(v)) for v in p])

    def sidecar(self) -> dict:
        return {"status": self.status.value, "iterations": self.iterations,
                "seed": self.seed, "config": self.config}

    def write(self, csv_path, json_path) -> None:
        self.to_csv(csv_path)
        with open(json_path, "w") as fh:
            json.dump(self.sidecar(), fh, indent=2, sort_keys=True)


def one_point_gradient_estimate(game: Game, player: int, x, delta: float, seed=None) -> np.ndarray:
    """``(m_i / delta) f_i(x_i + delta u, x_-i) u`` with ``u`` uniform on player i's unit sphere.

    Unbiased for the gradient of the ``delta``-smoothed cost.  ``seed`` may
    be an int or a ``numpy.random.Generator``.
    """
    if not delta > 0:
        raise InvalidParameterError("delta must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    v = np.array(_values(game, x), dtype=float)
    blk = game.block(player)
    k = game.dims[player]
    u = rng.standard_normal(k)
    u /= np.linalg.norm(u)
    v[blk] += delta * u
    return (k / delta) * game.costs[player](v) * u


def _bandit_gradient(game: Game, X: np.ndarray, U: np.ndarray, delta: float) -> np.ndarray:
    out = np.empty_like(X)
    for i in range(game.n):
        blk = game.block(i)
        Xp = X.copy()
        Xp[:, blk] += delta * U[:, blk]
        out[:, blk] = (game.dims[i] / delta) * game.costs[i](Xp)[:, None] * U[:, blk]
    return out


def _run(game, X0, max_iters, gamma_fn, noise=None, bandit_delta=None, conv_tol=None,
         blowup=1e6, escape=None, stride=1):
    """Shared engine.  ``gamma_fn(t)`` returns the (scalar or per-coordinate)
    step used to go from iterate ``t-1`` to ``t``; ``noise`` has shape
    ``(N, max_iters, m)`` when given.

    Returns ``(final, status, iterations, history)``; ``history`` is a list
    of ``(t, X_t)`` snapshots every ``stride`` steps (empty if stride is None).
    """
    X = np.array(X0, dtype=float)
    N = X.shape[0]
    status = np.full(N, _CODE[Status.MAX_ITERS], dtype=np.int8)
    iters = np.full(N, max_iters)
    active = np.ones(N, dtype=bool)
    history = [(0, X.copy())] if stride else []
    if escape is not None:
        center, radius = np.asarray(escape[0], dtype=float), float(escape[1])

    with np.errstate(all="ignore"):
        for t in range(1, max_iters + 1):
            idx = np.flatnonzero(active)
            if idx.size == 0:
                break
            Xa = X[idx]
            W = omega(game, Xa)
            if conv_tol is not None:
                conv = np.linalg.norm(W, axis=1) <= conv_tol
                if conv.any():
                    status[idx[conv]] = _CODE[Status.CONVERGED]
                    iters[idx[conv]] = t - 1
                    active[idx[conv]] = False
                    keep = ~conv
                    idx, Xa, W = idx[keep], Xa[keep], W[keep]
                    if idx.size == 0:
                        continue
            if bandit_delta is not None:
                W = _bandit_gradient(game, Xa, noise[idx, t - 1], bandit_delta)
            elif noise is not None:
                W = W + noise[idx, t - 1]
            Xa = Xa - gamma_fn(t) * W
            X[idx] = Xa

            norms = np.linalg.norm(Xa, axis=1)
            bad = ~np.isfinite(Xa).all(axis=1) | (norms > blowup)
            if bad.any():
                status[idx[bad]] = _CODE[Status.DIVERGED]
                iters[idx[bad]] = t
                active[idx[bad]] = False
            if escape is not None:
                out = ~bad & (np.linalg.norm(Xa - center, axis=1) > radius)
                if out.any():
                    status[idx[out]] = _CODE[Status.ESCAPED]
                    iters[idx[out]] = t
                    active[idx[out]] = False
            if stride and t % stride == 0:
                history.append((t, X.copy()))
    return X, [_STATUSES[c] for c in status], iters, history


def _trajectory(final, status, iters, history, row, seed, config):
    if history:
        stop = iters[row]
        times = [t for t, _ in history if t <= stop]
        pts = [H[row] for t, H in history if t <= stop]
        if times[-1] != stop:
            times.append(stop)
            pts.append(final[row])
    else:
        times, pts = [iters[row]], [final[row]]
    return Trajectory(np.array(pts), np.array(times), status[row], int(iters[row]), seed, config)


def step_deterministic(game: Game, x, rates: LearningRates) -> np.ndarray:
    v = _values(game, x)
    return v - rates.expand(game) * omega(game, v)


def simulate_deterministic(game: Game, x0, rates: LearningRates, max_iters: int = 10_000,
                           conv_tol: float | None = 1e-10, blowup: float = 1e6,
                           escape=None, stride: int | None = 1) -> Trajectory:
    """Iterate the gradient-play map from ``x0``.

    Stops on ``|omega| <= conv_tol`` (converged), ``|x| > blowup`` or NaN
    (diverged), leaving the ball ``escape = (center, radius)`` (escaped), or
    after ``max_iters`` steps.
    """
    if max_iters < 1:
        raise InvalidParameterError("max_iters must be at least 1")
    gam = rates.expand(game)
    X0 = np.array(_values(game, x0), dtype=float)[None]
    out = _run(game, X0, max_iters, lambda t: gam, conv_tol=conv_tol, blowup=blowup,
               escape=escape, stride=stride)
    config = {"rates": list(rates.per_player), "max_iters": max_iters, "conv_tol": conv_tol,
              "blowup": blowup, "game": game.label}
    return _trajectory(*out, 0, None, config)


def deterministic_orbits(game: Game, x0s, rates: LearningRates, steps: int) -> np.ndarray:
    """Every iterate of many deterministic runs, shape ``(steps + 1, N, m)``; no stopping rules."""
    X0 = np.atleast_2d(np.asarray(x0s, dtype=float))
    gam = rates.expand(game)
    _, _, _, hist = _run(game, X0, steps, lambda t: gam, blowup=np.inf, stride=1)
    return np.stack([H for _, H in hist])


def _stochastic_batch(game, X0, schedule, noise, max_iters, seeds, conv_tol, blowup, escape, stride):
    draws = np.stack([noise.draw(np.random.default_rng(s), max_iters, game.dims) for s in seeds])
    bandit = noise.delta if noise.kind == "one_point_bandit" else None
    gammas = schedule(np.arange(1, max_iters + 1))
    return _run(game, X0, max_iters, lambda t: gammas[t - 1], noise=draws, bandit_delta=bandit,
                conv_tol=conv_tol, blowup=blowup, escape=escape, stride=stride)


def simulate_stochastic(game: Game, x0, schedule: StepSchedule, noise: NoiseModel,
                        max_iters: int, seed: int, conv_tol: float | None = None,
                        blowup: float = 1e6, escape=None, stride: int | None = 1) -> Trajectory:
    """Stochastic gradient-play ``x_{t+1} = x_t - gamma_t (omega(x_t) + w_{t+1})``."""
    if max_iters < 1:
        raise InvalidParameterError("max_iters must be at least 1")
    X0 = np.array(_values(game, x0), dtype=float)[None]
    out = _stochastic_batch(game, X0, schedule, noise, max_iters, [seed], conv_tol, blowup,
                            escape, stride)
    config = {"schedule": asdict(schedule), "noise": asdict(noise), "max_iters": max_iters,
              "game": game.label}
    return _trajectory(*out, 0, seed, config)


def simulate_stochastic_batch(game: Game, x0s, schedule: StepSchedule, noise: NoiseModel,
                              max_iters: int, seeds, conv_tol=None, blowup=1e6, escape=None):
    """Final states of many stochastic runs; row k matches ``simulate_stochastic`` with ``seeds[k]``.

    Returns ``(finals, statuses, iterations)``.
    """
    X0 = np.atleast_2d(np.asarray(x0s, dtype=float))
    seeds = list(seeds)
    if X0.shape[0] == 1 and len(seeds) > 1:
        X0 = np.repeat(X0, len(seeds), axis=0)
    final, status, iters, _ = _stochastic_batch(game, X0, schedule, noise, max_iters, seeds,
                                                conv_tol, blowup, escape, None)
    return final, status, iters


def sample_ball(rng: np.random.Generator, center, radius: float) -> np.ndarray:
    """One point uniform in the Euclidean ball."""
    center = np.asarray(center, dtype=float)
    d = rng.standard_normal(center.size)
    d /= np.linalg.norm(d)
    return center + radius * rng.uniform() ** (1.0 / center.size) * d


@dataclass
class AvoidanceResult:
    avoidance_rate: float
    trials: int
    avoided: int
    seed: int
    escape_iterations: dict
    config: dict
    per_trial: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("per_trial")
        return d


def saddle_avoidance_experiment(game: Game, saddle, radius: float, rates: LearningRates | None = None,
                                schedule: StepSchedule | None = None, noise: NoiseModel | None = None,
                                trials: int = 1000, seed: int = 0, max_iters: int = 10_000,
                                escape_factor: float = 10.0) -> AvoidanceResult:
    """Monte-Carlo escape from a strict saddle.

    Trial k starts uniformly in the ``radius`` ball around ``saddle``, drawn
    from generator ``seed + k``, and counts as avoiding the saddle if its
    last iterate lies outside the ``escape_factor * radius`` ball.
    Deterministic play uses ``rates``; stochastic play uses ``schedule`` and
    ``noise`` with per-trial noise seeded by ``seed + k`` as well.
    """
    center = np.array(_values(game, saddle), dtype=float)
    if not classify(game, center).is_strict_saddle:
        raise InvalidParameterError(f"{center.tolist()} is not a strict saddle of {game.label}")
    if not radius > 0 or trials < 1:
        raise InvalidParameterError("radius must be positive and trials >= 1")
    if (rates is None) == (schedule is None):
        raise InvalidParameterError("give exactly one of rates or schedule")

    seeds = [seed + k for k in range(trials)]
    X0 = np.stack([sample_ball(np.random.default_rng(s), center, radius) for s in seeds])
    esc_r = escape_factor * radius
    if rates is not None:
        gam = rates.expand(game)
        final, status, iters, _ = _run(game, X0, max_iters, lambda t: gam, conv_tol=None,
                                       escape=(center, esc_r), stride=None)
        mode = {"rates": list(rates.per_player)}
    else:
        noise = noise or NoiseModel("isotropic_gaussian", 0.0)
        # distinct stream from the initial-point draw
        final, status, iters = simulate_stochastic_batch(
            game, X0, schedule, noise, max_iters, [s + 2**32 for s in seeds],
            escape=(center, esc_r))
        mode = {"schedule": asdict(schedule), "noise": asdict(noise)}

    with np.errstate(invalid="ignore"):
        dist = np.linalg.norm(final - center, axis=1)
    avoided = ~(dist <= esc_r)  # NaN counts as having left
    esc_iters = iters[avoided]
    stats = ({"mean": float(esc_iters.mean()), "median": float(np.median(esc_iters)),
              "max": int(esc_iters.max())} if esc_iters.size else {})
    config = {"game": game.label, "saddle": center.tolist(), "radius": radius,
              "escape_factor": escape_factor, "max_iters": max_iters, **mode}
    per_trial = [{"trial": k, "seed": seeds[k], "status": status[k].value,
                  "iterations": int(iters[k]), "distance": float(dist[k]),
                  "avoided": bool(avoided[k])} for k in range(trials)]
    return AvoidanceResult(float(avoided.mean()), trials, int(avoided.sum()), seed, stats,
                           config, per_trial)
