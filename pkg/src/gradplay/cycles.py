"""Periodic orbits of the continuous flow ``x' = -omega(x)``.

An orbit is integrated with classical fixed-step RK4.  After a transient, a
section through an anchor point normal to the flow is placed, and the orbit
is followed until it re-crosses the section in the same direction.  If the
crossing is not within ``anchor_tol`` of the anchor, the crossing becomes
the new anchor (one step of the Poincare map) and the search repeats.  Once
the orbit closes, the period is refined by bisection on the crossing time,
and the monodromy matrix comes from integrating ``M' = -D omega(x(t)) M``
alongside the orbit over one period.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError
from .game import Game, _values, game_jacobian, omega


def _flow(game: Game, x: np.ndarray) -> np.ndarray:
    return -omega(game, x)


def rk4_step(game: Game, x: np.ndarray, dt: float) -> np.ndarray:
    k1 = _flow(game, x)
    k2 = _flow(game, x + 0.5 * dt * k1)
    k3 = _flow(game, x + 0.5 * dt * k2)
    k4 = _flow(game, x + dt * k3)
    return x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def integrate_flow(game: Game, x0, dt: float, steps: int) -> np.ndarray:
    """RK4 orbit, shape ``(steps + 1, m)``; accepts a batch of start points too."""
    if not dt > 0:
        raise InvalidParameterError("dt must be positive")
    x = np.array(_values(game, x0), dtype=float)
    out = np.empty((steps + 1,) + x.shape)
    out[0] = x
    for k in range(steps):
        x = rk4_step(game, x, dt)
        out[k + 1] = x
    return out


def monodromy(game: Game, x0, period: float, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Integrate the orbit and its variational equation over ``period``.

    Returns ``(x(period), M)`` with ``M`` the flow linearization at ``x0``.
    """
    steps = max(1, math.ceil(period / dt))
    h = period / steps
    x = np.array(_values(game, x0), dtype=float)
    M = np.eye(x.size)

    def rhs(x, M):
        return -omega(game, x), -game_jacobian(game, x) @ M

    for _ in range(steps):
        a1, b1 = rhs(x, M)
        a2, b2 = rhs(x + 0.5 * h * a1, M + 0.5 * h * b1)
        a3, b3 = rhs(x + 0.5 * h * a2, M + 0.5 * h * b2)
        a4, b4 = rhs(x + h * a3, M + h * b3)
        x = x + h / 6 * (a1 + 2 * a2 + 2 * a3 + a4)
        M = M + h / 6 * (b1 + 2 * b2 + 2 * b3 + b4)
    return x, M


LINEARLY_STABLE = "linearly_stable"
LINEARLY_UNSTABLE = "linearly_unstable"
NON_HYPERBOLIC = "non_hyperbolic"


@dataclass(frozen=True)
class CycleReport:
    period_estimate: float
    anchor_point: tuple[float, ...]
    characteristic_multipliers: tuple[complex, ...]
    trivial_multiplier: complex
    classification: str
    return_distance: float
    tol: float
    config: dict = field(default_factory=dict, compare=False)

    @property
    def nontrivial_multipliers(self) -> tuple[complex, ...]:
        ms = list(self.characteristic_multipliers)
        ms.remove(self.trivial_multiplier)
        return tuple(ms)

    def to_dict(self) -> dict:
        pair = lambda z: [float(z.real), float(z.imag)]  # noqa: E731
        return {
            "period_estimate": self.period_estimate,
            "anchor_point": list(self.anchor_point),
            "characteristic_multipliers": [pair(z) for z in self.characteristic_multipliers],
            "trivial_multiplier": pair(self.trivial_multiplier),
            "classification": self.classification,
            "return_distance": self.return_distance,
            "tol": self.tol,
            "config": self.config,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def classify_multipliers(mults, tol: float = 1e-3) -> tuple[complex, str]:
    """Drop the multiplier nearest 1 and classify the rest by modulus."""
    mults = [complex(z) for z in mults]
    trivial = min(mults, key=lambda z: abs(z - 1))
    rest = list(mults)
    rest.remove(trivial)
    mods = np.abs(rest)
    if np.all(mods < 1 - tol):
        label = LINEARLY_STABLE
    elif np.any(mods > 1 + tol):
        label = LINEARLY_UNSTABLE
    else:
        label = NON_HYPERBOLIC
    return trivial, label


def _refine_crossing(game, x, dt, anchor, normal, iters=60):
    # s(tau) = normal . (rk4(x, tau) - anchor) changes sign on [0, dt]
    lo, hi = 0.0, dt
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if normal @ (rk4_step(game, x, mid) - anchor) < 0:
            lo = mid
        else:
            hi = mid
    return hi, rk4_step(game, x, hi)


def detect_limit_cycle(game: Game, x0, dt: float = 1e-2, t_max: float = 200.0,
                       transient: float = 50.0, anchor_tol: float = 1e-4,
                       multiplier_tol: float = 1e-3, equilibrium_tol: float = 1e-8,
                       blowup: float = 1e6, monodromy_dt: float | None = None) -> CycleReport | None:
    """Search for a periodic orbit of ``x' = -omega(x)`` starting from ``x0``.

    Returns None when the orbit settles on an equilibrium, leaves the
    ``blowup`` ball, or fails to close within ``t_max``; absence of a report
    is not proof that no cycle exists.
    """
    if not dt > 0 or not t_max > 0 or transient < 0:
        raise InvalidParameterError("need dt > 0, t_max > 0, transient >= 0")
    if transient >= t_max:
        raise InvalidParameterError("transient must be shorter than t_max")
    x = np.array(_values(game, x0), dtype=float)
    t = 0.0

    def stopped(x):
        return (not np.all(np.isfinite(x)) or np.linalg.norm(x) > blowup
                or np.linalg.norm(omega(game, x)) <= equilibrium_tol)

    while t < transient:
        x = rk4_step(game, x, dt)
        t += dt
        if stopped(x):
            return None

    anchor, t_anchor = x, t
    while t < t_max:
        f = _flow(game, anchor)
        normal = f / np.linalg.norm(f)
        s_prev = 0.0
        x = anchor
        closed = None
        while t < t_max:
            x_new = rk4_step(game, x, dt)
            s_new = normal @ (x_new - anchor)
            if s_prev < 0 <= s_new:
                tau, xc = _refine_crossing(game, x, dt, anchor, normal)
                closed = (t + tau, xc)
                t += dt
                x = x_new
                break
            t += dt
            x, s_prev = x_new, s_new
            if stopped(x):
                return None
        if closed is None:
            return None
        t_cross, xc = closed
        dist = float(np.linalg.norm(xc - anchor))
        if dist <= anchor_tol * (1 + np.linalg.norm(anchor)):
            period = t_cross - t_anchor
            _, M = monodromy(game, anchor, period, monodromy_dt or dt)
            mults = np.linalg.eigvals(M)
            mults = tuple(complex(z) for z in mults[np.lexsort((mults.imag, -np.abs(mults)))])
            trivial, label = classify_multipliers(mults, multiplier_tol)
            return CycleReport(
                period_estimate=float(period),
                anchor_point=tuple(float(c) for c in anchor),
                characteristic_multipliers=mults,
                trivial_multiplier=trivial,
                classification=label,
                return_distance=dist,
                tol=multiplier_tol,
                config={"dt": dt, "t_max": t_max, "transient": transient,
                        "anchor_tol": anchor_tol, "game": game.label},
            )
        # one Poincare-map step: restart the section at the crossing
        anchor, t_anchor = xc, t_cross
        # resume integration from the exact crossing point
        x, t = xc, t_cross
    return None
