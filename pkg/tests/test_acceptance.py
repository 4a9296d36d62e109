"""Acceptance criteria 1-10, one test each, each recording a single pass/fail line."""
import math
import time

import numpy as np
import pytest

from gradplay.cycles import detect_limit_cycle, integrate_flow
from gradplay.dynamics import (
    LearningRates, NoiseModel, StepSchedule, deterministic_orbits, sample_ball,
    saddle_avoidance_experiment, simulate_stochastic_batch,
)
from gradplay.equilibria import classify
from gradplay.errors import SolverFailure
from gradplay.game import (
    finite_difference_check, game_jacobian, make_morse_smale_chain, make_quadratic_general_sum,
    make_quadratic_potential, make_quadratic_zero_sum, make_van_der_pol_game,
)
from gradplay.lq import (
    FeedbackPolicy, LqGame, census_sweep, lq_policy_gradient, lyapunov_iterations, policy_cost,
    riccati_residuals,
)

SEED = 0
_first_run = {}


def timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


# --- criterion bodies (pure functions of the fixed seed) --------------------------

def taxonomy():
    cases = {
        "general-sum(1,1,-1,-0.5)": (make_quadratic_general_sum(1, 1, -1, -0.5),
                                     dict(is_lase=True, is_dne=False, is_strict_saddle=False)),
        "zero-sum(2,2,1)": (make_quadratic_zero_sum(2, 2, 1),
                            dict(is_lase=True, is_dne=False, is_strict_saddle=False)),
        "potential(1,2,1)": (make_quadratic_potential(1, 2, 1),
                             dict(is_dne=True, is_strict_saddle=True, is_lase=False)),
        "zero-sum(1,1,-1)": (make_quadratic_zero_sum(1, 1, -1),
                             dict(is_dne=True, is_nddne=True, is_lase=True)),
    }
    bad = []
    margin = math.inf
    for name, (g, want) in cases.items():
        r = classify(g, (0.0, 0.0), tol=1e-9)
        if any(getattr(r, k) != v for k, v in want.items()):
            bad.append(name)
        margin = min(margin, min(abs(e.real) for e in r.eigenvalues))
    return {"mismatches": bad, "min_abs_real": margin}


def deterministic_avoidance():
    pot = saddle_avoidance_experiment(make_quadratic_potential(1, 2, 1), (0, 0), 0.1,
                                      rates=LearningRates((0.1, 0.1)), trials=1000, seed=SEED)
    chain = saddle_avoidance_experiment(make_morse_smale_chain(3), (1, 0, 0), 0.1,
                                        rates=LearningRates((0.1,) * 3), trials=1000, seed=SEED)
    return {"potential": pot.avoidance_rate, "chain": chain.avoidance_rate}


SCHEDULE = StepSchedule("power", 1.0, eta=0.75)
NOISE = NoiseModel("isotropic_gaussian", 0.1)


def stochastic_avoidance():
    f, _, _ = simulate_stochastic_batch(make_quadratic_potential(1, 2, 1), (0.0, 0.0), SCHEDULE, NOISE,
                                        10_000, range(SEED, SEED + 200))
    return {"escaped": float(np.mean(np.linalg.norm(f, axis=1) > 0.5))}


def potential_convergence():
    seeds = range(SEED, SEED + 200)
    x0 = np.stack([sample_ball(np.random.default_rng(s), (0.0, 0.0), 1.0) for s in seeds])
    f, _, _ = simulate_stochastic_batch(make_quadratic_potential(1, 0.5, 1), x0, SCHEDULE, NOISE,
                                        10_000, [s + 2**32 for s in seeds])
    return {"converged": float(np.mean(np.linalg.norm(f, axis=1) <= 0.05))}


def lase_rate():
    rng = np.random.default_rng(SEED)
    named = [make_quadratic_general_sum(1, 1, -1, -0.5), make_quadratic_zero_sum(2, 2, 1),
             make_quadratic_zero_sum(1, 1, -1), make_quadratic_potential(1, 0.5, 1)]
    games = [(g, (0.1, 0.1)) for g in named]
    makers = {
        "general-sum": lambda: make_quadratic_general_sum(*rng.uniform(-2, 2, 4)),
        "zero-sum": lambda: make_quadratic_zero_sum(*rng.uniform(-2, 2, 3)),
        "potential": lambda: make_quadratic_potential(*rng.uniform(-2, 2, 3)),
    }
    for make in makers.values():
        found = 0
        while found < 30:
            g = make()
            if not classify(g, (0.0, 0.0)).is_lase:
                continue
            found += 1
            games.append((g, tuple(rng.uniform(0.01, 0.2, 2))))
    worst = {}
    for g, gam in games:
        J = game_jacobian(g, (0.0, 0.0))
        rho = max(abs(np.linalg.eigvals(np.eye(2) - np.diag(gam) @ J)))
        if rho >= 1:
            continue
        fam = g.label.split(":")[0]
        x0 = np.stack([sample_ball(rng, (0.0, 0.0), 1.0) for _ in range(10)])
        orbits = deterministic_orbits(g, x0, LearningRates(gam), 200)
        norms = np.linalg.norm(orbits, axis=2)
        t = np.arange(orbits.shape[0])[:, None]
        ratio = np.max(norms / (norms[0] * (rho + 1e-6) ** t))
        worst[fam] = max(worst.get(fam, 0.0), float(ratio))
    return worst


def cycles():
    vdp = detect_limit_cycle(make_van_der_pol_game(1.0), (0.1, 0.0))
    rot = detect_limit_cycle(make_quadratic_zero_sum(0, 1, 0), (1.0, 0.0))
    traj = integrate_flow(make_quadratic_zero_sum(0, 1, 0), (1.0, 0.0), 1e-3, round(2 * math.pi / 1e-3))
    drift = float(np.max(np.abs(np.sum(traj ** 2, axis=1) - 1.0)))
    rng = np.random.default_rng(SEED)
    spurious = 0
    for _ in range(20):
        a, b, c = rng.uniform(-2, 2, 3)
        spurious += detect_limit_cycle(make_quadratic_potential(a, b, c), rng.uniform(-2, 2, 2)) is not None
    return {
        "vdp_period": vdp.period_estimate if vdp else None,
        "vdp_class": vdp.classification if vdp else None,
        "rot_period": rot.period_estimate if rot else None,
        "rot_class": rot.classification if rot else None,
        "rot_drift": drift,
        "potential_cycles": spurious,
    }


SWEEPS = (("r", (0.1, 0.5, 0.9), 0.01), ("q", (0.1, 0.5, 0.9), 0.1))


def lq_figure():
    out = {}
    for vary, grid, fixed in SWEEPS:
        for p in census_sweep(vary, grid, fixed, samples=1000, repeats=10, seed=SEED):
            out[(vary, p.value)] = (p.mean_frequency, p.ci, p.failures)
    return out


def lq_soundness():
    rng = np.random.default_rng(SEED)
    worst = {"riccati": 0.0, "gradient": 0.0, "rho": 0.0, "fd": 0.0}
    solved = failed = 0
    while solved < 100:
        g = LqGame.census(rng.uniform(0, 1, (2, 2)), 0.01, float(rng.uniform(0.05, 0.95)))
        try:
            sol = lyapunov_iterations(g)
        except SolverFailure:
            failed += 1
            continue
        solved += 1
        Acl = g.A - g.B1 @ sol.policy.K1 - g.B2 @ sol.policy.K2
        worst["riccati"] = max(worst["riccati"], *riccati_residuals(g, sol))
        worst["gradient"] = max(worst["gradient"], sol.gradient_norm)
        worst["rho"] = max(worst["rho"], max(abs(np.linalg.eigvals(Acl))))
        # gradient oracle at a stable policy near the Nash gains
        while True:
            k = sol.policy.vector + 0.1 * rng.normal(size=4)
            pol = FeedbackPolicy.from_vector(k)
            if max(abs(np.linalg.eigvals(g.A - g.B1 @ pol.K1 - g.B2 @ pol.K2))) < 0.99:
                break
        for i in (0, 1):
            exact = lq_policy_gradient(g, pol, i).ravel()
            fd = np.zeros(2)
            for j in range(2):
                e = np.zeros(4)
                e[2 * i + j] = 1e-5
                fd[j] = (policy_cost(g, FeedbackPolicy.from_vector(k + e), i)
                         - policy_cost(g, FeedbackPolicy.from_vector(k - e), i)) / 2e-5
            worst["fd"] = max(worst["fd"], np.linalg.norm(exact - fd) / max(np.linalg.norm(fd), 1e-12))
    worst["failed_solves"] = failed
    return worst


def derivative_oracles():
    rng = np.random.default_rng(SEED)
    games = [make_quadratic_general_sum(*rng.uniform(-2, 2, 4)), make_quadratic_zero_sum(*rng.uniform(-2, 2, 3)),
             make_quadratic_potential(*rng.uniform(-2, 2, 3)), make_morse_smale_chain(3),
             make_morse_smale_chain(5), make_van_der_pol_game(1.0)]
    worst = 0.0
    for g in games:
        for _ in range(100):
            worst = max(worst, *finite_difference_check(g, rng.uniform(-2, 2, g.m)))
    return {"max_rel_error": worst}


# --- tests -------------------------------------------------------------------------

def test_criterion_01_taxonomy(acceptance):
    res, dt = timed(taxonomy)
    ok = not res["mismatches"] and res["min_abs_real"] > 1e-9 and dt < 1
    acceptance(1, ok, f"mismatches={res['mismatches']} min|Re|={res['min_abs_real']:.3g} t={dt:.2f}s")
    assert ok


def test_criterion_02_deterministic_avoidance(acceptance):
    res, dt = timed(deterministic_avoidance)
    _first_run[2] = res
    ok = res["potential"] >= 0.999 and res["chain"] >= 0.999 and dt < 30
    acceptance(2, ok, f"potential={res['potential']:.4f} chain={res['chain']:.4f} t={dt:.1f}s")
    assert ok


def test_criterion_03_stochastic_avoidance(acceptance):
    res, dt = timed(stochastic_avoidance)
    _first_run[3] = res
    ok = res["escaped"] >= 0.99 and dt < 60
    acceptance(3, ok, f"escaped fraction={res['escaped']:.3f} t={dt:.1f}s")
    assert ok


def test_criterion_04_potential_convergence(acceptance):
    res, dt = timed(potential_convergence)
    _first_run[4] = res
    ok = res["converged"] >= 0.95 and dt < 60
    acceptance(4, ok, f"converged fraction={res['converged']:.3f} t={dt:.1f}s")
    assert ok


def test_criterion_05_lase_exponential_rate(acceptance):
    res, dt = timed(lase_rate)
    ok = all(v <= 1 + 1e-9 for v in res.values()) and dt < 5
    detail = " ".join(f"{k}:max_ratio={v:.3f}" for k, v in sorted(res.items()))
    acceptance(5, ok, f"{detail} t={dt:.1f}s")
    assert ok, res


def test_criterion_06_cycles(acceptance):
    res, dt = timed(cycles)
    ok = (res["vdp_period"] is not None and abs(res["vdp_period"] - 6.66) <= 0.05
          and res["vdp_class"] == "linearly_stable"
          and res["rot_period"] is not None and abs(res["rot_period"] - 2 * math.pi) <= 0.01
          and res["rot_class"] == "non_hyperbolic" and res["rot_drift"] < 1e-6
          and res["potential_cycles"] == 0 and dt < 30)
    acceptance(6, ok, f"vdp T={res['vdp_period']:.4f} {res['vdp_class']}; rotation T={res['rot_period']:.4f} "
                      f"{res['rot_class']} drift={res['rot_drift']:.1e}; potential cycles={res['potential_cycles']}"
                      f" t={dt:.1f}s")
    assert ok


def test_criterion_07_lq_figure(acceptance):
    res, dt = timed(lq_figure)
    _first_run[7] = res
    ok = all(0.03 <= m <= 0.35 for m, _, _ in res.values()) and dt < 600
    detail = " ".join(f"{v}={x:g}:{m:.3f}" for (v, x), (m, _, _) in res.items())
    acceptance(7, ok, f"{detail} t={dt:.0f}s")
    assert ok, res


def test_criterion_08_lq_soundness(acceptance):
    res, dt = timed(lq_soundness)
    ok = (res["riccati"] < 1e-8 and res["gradient"] < 1e-6 and res["rho"] < 1 and res["fd"] < 1e-4
          and dt < 120)
    acceptance(8, ok, f"riccati={res['riccati']:.1e} grad={res['gradient']:.1e} rho={res['rho']:.3f} "
                      f"fd={res['fd']:.1e} failed_solves={res['failed_solves']} t={dt:.1f}s")
    assert ok


def test_criterion_09_derivative_oracles(acceptance):
    res, dt = timed(derivative_oracles)
    ok = res["max_rel_error"] < 1e-6 and dt < 5
    acceptance(9, ok, f"max relative error={res['max_rel_error']:.2e} t={dt:.2f}s")
    assert ok


def test_criterion_10_reproducibility(acceptance):
    bodies = {2: deterministic_avoidance, 3: stochastic_avoidance, 4: potential_convergence, 7: lq_figure}
    same = {}
    for k, fn in bodies.items():
        first = _first_run.get(k) or fn()
        same[k] = fn() == first
    ok = all(same.values())
    acceptance(10, ok, " ".join(f"c{k}={'identical' if v else 'DIFFERENT'}" for k, v in same.items()))
    assert ok
