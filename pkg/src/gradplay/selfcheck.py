"""Fast invariant checks run by ``gradplay check``; ``deep=True`` adds Monte-Carlo suites."""
from __future__ import annotations

import time

import numpy as np

from . import game as G
from .cycles import detect_limit_cycle
from .dynamics import (LearningRates, NoiseModel, StepSchedule, sample_ball,
                       saddle_avoidance_experiment, simulate_stochastic_batch)
from .equilibria import classify
from .errors import InvalidParameterError
from .lq import LqGame, lyapunov_iterations, riccati_residuals, sample_census


def _fd_families():
    return [
        G.make_quadratic_general_sum(1, 1, -1, -0.5),
        G.make_quadratic_zero_sum(2, 2, 1),
        G.make_quadratic_potential(1, 2, 1),
        G.make_morse_smale_chain(3),
        G.make_van_der_pol_game(1.0),
    ]


def _check_gradients(tol):
    rng = np.random.default_rng(0)
    worst = 0.0
    for g in _fd_families():
        for _ in range(20):
            worst = max(worst, *G.finite_difference_check(g, rng.uniform(-2, 2, g.m)))
    return worst < tol, f"max relative finite-difference error {worst:.2e}"


def _check_eig2x2(tol):
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(200):
        a, b, c, d = rng.uniform(-3, 3, 4)
        rep = classify(G.make_quadratic_general_sum(a, b, c, d), (0.0, 0.0))
        tr = a + d
        disc = np.sqrt(complex((a - d) ** 2 + 4 * b * c))
        exact = sorted([(tr - disc) / 2, (tr + disc) / 2], key=lambda z: (z.real, z.imag))
        worst = max(worst, max(abs(e - x) for e, x in zip(rep.eigenvalues, exact)))
    return worst < 1e-10, f"max 2x2 eigenvalue error {worst:.2e}"


def _check_chain(tol):
    rep = classify(G.make_morse_smale_chain(3), (1.0, 0.0, 0.0))
    roots = np.roots([1, 0, 0, -2])
    err = max(min(abs(e - r) for r in roots) for e in rep.eigenvalues)
    return err < 1e-8 and rep.is_strict_saddle, f"cube-root error {err:.2e}"


def _check_taxonomy(tol):
    cases = [
        (G.make_quadratic_general_sum(1, 1, -1, -0.5), dict(is_lase=True, is_dne=False)),
        (G.make_quadratic_zero_sum(2, 2, 1), dict(is_lase=True, is_dne=False)),
        (G.make_quadratic_potential(1, 2, 1), dict(is_dne=True, is_strict_saddle=True)),
        (G.make_quadratic_zero_sum(1, 1, -1), dict(is_dne=True, is_lase=True)),
    ]
    ok = all(all(getattr(classify(g, (0.0, 0.0)), k) == v for k, v in want.items())
             for g, want in cases)
    return ok, "four reference classifications"


def _check_riccati(tol):
    g = LqGame(np.zeros((2, 2)), np.array([[1.0], [1.0]]), np.array([[0.0], [1.0]]),
               np.diag([0.01, 1.0]), np.diag([1.0, 0.01]), 0.01, 0.1)
    sol = lyapunov_iterations(g)
    res = max(riccati_residuals(g, sol))
    ok = res < 1e-8 and sol.gradient_norm < 1e-10 and np.allclose(sol.P1, g.Q1)
    return ok, f"A=0 game residual {res:.2e}, gradient {sol.gradient_norm:.2e}"


def _deep_avoidance(tol):
    r1 = saddle_avoidance_experiment(G.make_quadratic_potential(1, 2, 1), (0, 0), 0.1,
                                     rates=LearningRates.uniform(0.1, 2), trials=1000, seed=0)
    r2 = saddle_avoidance_experiment(G.make_morse_smale_chain(3), (1, 0, 0), 0.1,
                                     rates=LearningRates.uniform(0.1, 3), trials=1000, seed=0)
    return (min(r1.avoidance_rate, r2.avoidance_rate) >= 0.999,
            f"avoidance {r1.avoidance_rate:.3f} / {r2.avoidance_rate:.3f}")


def _deep_stochastic(tol):
    sch = StepSchedule("power", 1.0, eta=0.75)
    nz = NoiseModel("isotropic_gaussian", 0.1)
    f, _, _ = simulate_stochastic_batch(G.make_quadratic_potential(1, 2, 1), (0, 0), sch, nz,
                                        10_000, range(200))
    esc = float(np.mean(np.linalg.norm(f, axis=1) > 0.5))
    x0 = np.stack([sample_ball(np.random.default_rng(s), (0, 0), 1.0) for s in range(200)])
    f, _, _ = simulate_stochastic_batch(G.make_quadratic_potential(1, 0.5, 1), x0, sch, nz,
                                        10_000, range(200))
    conv = float(np.mean(np.linalg.norm(f, axis=1) < 0.05))
    return esc >= 0.99 and conv >= 0.95, f"saddle escape {esc:.3f}, convergence {conv:.3f}"


def _deep_cycles(tol):
    vdp = detect_limit_cycle(G.make_van_der_pol_game(1.0), (0.1, 0.0))
    rot = detect_limit_cycle(G.make_quadratic_zero_sum(0, 1, 0), (1.0, 0.0))
    pot = detect_limit_cycle(G.make_quadratic_potential(1, 0.5, 1), (1.0, 1.0))
    ok = (vdp is not None and abs(vdp.period_estimate - 6.66) <= 0.05
          and vdp.classification == "linearly_stable"
          and rot is not None and abs(rot.period_estimate - 2 * np.pi) <= 0.01
          and rot.classification == "non_hyperbolic" and pot is None)
    return ok, "Van der Pol, rotation and potential-game cycles"


def _deep_census(tol):
    res = sample_census(0.01, 0.1, samples=200, seed=0)
    return 0.03 <= res.frequency <= 0.35, f"census frequency {res.frequency:.3f} (200 samples)"


FAST = [("gradient-oracles", _check_gradients), ("eigenvalues-2x2", _check_eig2x2),
        ("chain-eigenvalues", _check_chain), ("taxonomy", _check_taxonomy),
        ("riccati-zero-A", _check_riccati)]
DEEP = [("avoidance", _deep_avoidance), ("stochastic", _deep_stochastic),
        ("cycles", _deep_cycles), ("census", _deep_census)]


def run_checks(deep: bool = False, tol: float = 1e-6) -> list[dict]:
    if not tol > 0:
        raise InvalidParameterError(f"tol must be positive, got {tol}")
    out = []
    for name, fn in FAST + (DEEP if deep else []):
        t0 = time.perf_counter()
        try:
            ok, detail = fn(tol)
        except Exception as exc:  # a crashing check is a failing check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append({"name": name, "passed": bool(ok), "detail": detail,
                    "seconds": round(time.perf_counter() - t0, 3)})
    return out
